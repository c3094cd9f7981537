"""Log-load regression: design, estimators, impacts, diagnostics, simulation."""
