"""Contact-aware trajectory and inertial-parameter estimation for planar legged models."""

__version__ = "0.1.0"
