"""Space-time Galerkin boundary elements for the transient heat equation in 3D."""

__version__ = "0.1.0"
