"""QAOA MaxCut with donor-to-acceptor parameter transfer and single-layer refinement."""
__version__ = "0.1.0"
