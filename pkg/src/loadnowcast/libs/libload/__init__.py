"""Daily electricity load series: ingestion, validation and calendars."""
import os
from pathlib import Path

default_holidays_path = Path(
    f"{os.path.dirname(os.path.abspath(__file__))}"
).joinpath("holidays_it.csv")
