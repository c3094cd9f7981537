"""Nowcasting the economic impact of an intervention from electricity load."""

__version__ = "0.1.0"
