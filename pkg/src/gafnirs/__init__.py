"""fNIRS task classification with Gramian angular field images and a from-scratch CNN."""

__version__ = "0.1.0"
