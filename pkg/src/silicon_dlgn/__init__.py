"""Area-aware differentiable logic gate networks compiled to standard-cell netlists."""

__version__ = "0.1.0"
