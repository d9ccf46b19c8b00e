"""HTTP service exposing the forecasting engine."""

from .app import create_app

__all__ = ["create_app"]
