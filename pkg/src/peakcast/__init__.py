"""Alert-based forecasting of seasonal pediatric respiratory hospitalization peaks."""

__version__ = "0.1.0"
