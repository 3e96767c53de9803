"""Meter disaggregation and fault detection for built-up HVAC systems.

The toolkit splits a building's metered heating and cooling power into
per-air-handler and per-VAV estimates using first-order heat transfer
relations whose scale factors are calibrated by regression against the
meters, then screens the same trend data for common faults and ranks the
confirmed ones by estimated annual energy waste.
"""

__version__ = "0.1.0"

from .errors import DisaggError  # noqa: F401
