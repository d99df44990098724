"""Carbon-intensity forecasting with stacked per-hour ensembles."""

__version__ = "0.1.0"
