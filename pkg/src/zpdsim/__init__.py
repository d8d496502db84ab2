"""Battery-DoS modelling and zero-power-defense evaluation for implantable medical devices."""

__version__ = "0.1.0"
