"""Basin stability with parameter mismatch for bistable energy harvesters."""

__version__ = "0.1.0"
