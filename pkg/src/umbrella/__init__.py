"""Controller-independent SDN northbound programming framework."""

__version__ = "0.1.0"
