"""mmforge: variate-token Transformer forecasting with attention meta-learning."""

__version__ = "0.1.0"
