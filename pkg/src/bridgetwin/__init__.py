"""Sensor-light bridge digital twin.

Detection logs and weather records in; traffic-density states, shock events,
fatigue damage, reliability indices, Monte Carlo risk distributions, and
forest-based fatigue forecasts out.
"""

__version__ = "0.1.0"
