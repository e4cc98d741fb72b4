"""Camera-tour planning: retrieval, preference-based pose refinement, and
corridor-constrained trajectory generation for a desk-scale indoor drone
cinematography pipeline."""

__version__ = "0.1.0"
