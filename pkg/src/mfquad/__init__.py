"""Moment-free quadrature on implicit domains from divergence operators."""
from ._blas import pin_openblas_kernels

pin_openblas_kernels()

from .geometry import DomainModel, make_builtin, builtin_names  # noqa: E402
from .nodegen import NodeSet, advancing_front, make_X, rejection_sample  # noqa: E402
from .quadrature import (  # noqa: E402
    ConstraintKind,
    ConstraintSpec,
    Method,
    QuadratureRule,
    apply_rule,
    compute_weights,
)

__version__ = "0.1.0"

__all__ = [
    "ConstraintKind",
    "ConstraintSpec",
    "DomainModel",
    "Method",
    "NodeSet",
    "QuadratureRule",
    "advancing_front",
    "apply_rule",
    "builtin_names",
    "compute_weights",
    "make_X",
    "make_builtin",
    "rejection_sample",
]
