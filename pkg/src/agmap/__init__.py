"""Canonical almost geodesic mappings: tensor calculus, closed Cauchy-type systems and their numerics."""
from .tensor import Tensor, alternate, contract, cyclic_sym, kronecker, outer_product

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "__version__",
    "alternate",
    "contract",
    "cyclic_sym",
    "kronecker",
    "outer_product",
]
