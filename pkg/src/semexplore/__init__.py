"""Multi-class occupancy mapping and closed-form mutual information for exploration."""

__version__ = "0.1.0"
