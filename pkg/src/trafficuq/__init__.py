"""Prediction intervals for traffic-flow forecasts, and the metrics to judge them."""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
