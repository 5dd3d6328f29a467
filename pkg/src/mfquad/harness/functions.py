"""Test integrands and their antiderivatives in the first coordinate.

Each function also knows ``int_{x0}^{x} f(t, y[, z]) dt`` in closed form,
which turns a volume integral into a boundary integral through the field
``F = (that antiderivative, 0[, 0])`` with ``div F = f``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..quadrature import fundamental_ghat


class TestKind(enum.Enum):
    RUNGE = "Runge"
    FRANKE2D = "Franke2D"
    RENKA3D = "Renka3D"
    CONSTANT = "Constant"
    FUNDAMENTAL_GHAT = "FundamentalGhat"


# Gaussian terms of the Franke (2D) and Renka (3D) functions on [0,1]^d as
# (coefficient, per-axis (shift, scale) pairs, linear-exponent axes).
# A term is coef * exp(-sum scale*(9x-shift)^2 - sum (9x+1)/10 over lin).
_FRANKE_TERMS = (
    (0.75, ((2.0, 0.25), (2.0, 0.25), (2.0, 0.25)), ()),
    (0.75, ((-1.0, 1.0 / 49.0),), (1, 2)),
    (0.5, ((7.0, 0.25), (3.0, 0.25), (5.0, 0.25)), ()),
    (-0.2, ((4.0, 1.0), (7.0, 1.0), (5.0, 1.0)), ()),
)


def _franke_terms(dim: int):
    for coef, quad, lin in _FRANKE_TERMS:
        yield coef, quad[:dim], tuple(k for k in lin if k < dim)


def _erf_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``erf(b) - erf(a)`` without cancellation in the tails."""
    out = special.erf(b) - special.erf(a)
    pos = (a > 0) & (b > 0)
    neg = (a < 0) & (b < 0)
    out[pos] = special.erfc(a[pos]) - special.erfc(b[pos])
    out[neg] = special.erfc(-b[neg]) - special.erfc(-a[neg])
    return out


def _franke_value(p: np.ndarray) -> np.ndarray:
    # argument on [-1,1]^d, mapped to [0,1]^d
    u = 9.0 * (p + 1.0) / 2.0
    out = np.zeros(len(p))
    for coef, quad, lin in _franke_terms(p.shape[1]):
        e = np.zeros(len(p))
        for k, (shift, scale) in enumerate(quad):
            e -= scale * (u[:, k] - shift) ** 2
        for k in lin:
            e -= (u[:, k] + 1.0) / 10.0
        out += coef * np.exp(e)
    return out


def _franke_xint(p: np.ndarray, x0: float) -> np.ndarray:
    u = 9.0 * (p + 1.0) / 2.0
    u0 = 9.0 * (x0 + 1.0) / 2.0
    out = np.zeros(len(p))
    for coef, quad, lin in _franke_terms(p.shape[1]):
        e = np.zeros(len(p))
        for k, (shift, scale) in enumerate(quad[1:], start=1):
            e -= scale * (u[:, k] - shift) ** 2
        for k in lin:
            e -= (u[:, k] + 1.0) / 10.0
        shift, scale = quad[0]
        ra = np.sqrt(scale)
        # du = 4.5 dx; int exp(-s (u - c)^2) du = sqrt(pi/s)/2 * erf(sqrt(s)(u - c))
        lo = np.full(len(p), ra * (u0 - shift))
        hi = ra * (u[:, 0] - shift)
        out += coef * np.exp(e) * np.sqrt(np.pi) / (2.0 * ra * 4.5) * _erf_diff(lo, hi)
    return out


@dataclass(frozen=True)
class TestFunction:
    """A named integrand; ``center`` is x_R (Runge) or x0 (fundamental solution)."""

    kind: TestKind
    dim: int
    center: tuple | None = None
    value: float = 1.0

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def needs_normals(self) -> bool:
        return self.kind is TestKind.FUNDAMENTAL_GHAT

    def __call__(self, p, normals=None) -> np.ndarray:
        return eval_test(self, p, normals)

    def x_antiderivative(self, p, x0: float) -> np.ndarray:
        """``int_{x0}^{p_1} f(t, p_2[, p_3]) dt`` for each row of ``p``."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        k = self.kind
        if k is TestKind.CONSTANT:
            return self.value * (p[:, 0] - x0)
        if k is TestKind.RUNGE:
            c = np.asarray(self.center, float)
            rho2 = np.sum((p[:, 1:] - c[1:]) ** 2, axis=1)
            s = np.sqrt(1.0 + 25.0 * rho2)
            return (np.arctan(5.0 * (p[:, 0] - c[0]) / s) - np.arctan(5.0 * (x0 - c[0]) / s)) / (5.0 * s)
        if k in (TestKind.FRANKE2D, TestKind.RENKA3D):
            return _franke_xint(p, x0)
        raise ValueError(f"{k.value} has no interior antiderivative")


def eval_test(fn: TestFunction, p, normals=None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != fn.dim:
        raise ValueError(f"{fn.name} is {fn.dim}-dimensional, got points of dimension {p.shape[1]}")
    k = fn.kind
    if k is TestKind.CONSTANT:
        out = np.full(len(p), float(fn.value))
    elif k is TestKind.RUNGE:
        c = np.asarray(fn.center, float)
        out = 1.0 / (1.0 + 25.0 * np.sum((p - c) ** 2, axis=1))
    elif k in (TestKind.FRANKE2D, TestKind.RENKA3D):
        out = _franke_value(p)
    else:
        if normals is None:
            raise ValueError("the fundamental-solution integrand needs boundary normals")
        out = np.atleast_1d(fundamental_ghat(fn.dim, p, normals, np.asarray(fn.center, float)))
    return float(out[0]) if single else out


def runge(center) -> TestFunction:
    c = tuple(float(v) for v in np.asarray(center, float))
    return TestFunction(TestKind.RUNGE, len(c), c)


def franke(dim: int) -> TestFunction:
    """Franke's function in 2D, Renka's extension in 3D, on [-1, 1]^d."""
    if dim == 2:
        return TestFunction(TestKind.FRANKE2D, 2)
    if dim == 3:
        return TestFunction(TestKind.RENKA3D, 3)
    raise ValueError("dim must be 2 or 3")


def constant(dim: int, value: float = 1.0) -> TestFunction:
    return TestFunction(TestKind.CONSTANT, dim, None, float(value))


def fundamental(x0) -> TestFunction:
    c = tuple(float(v) for v in np.asarray(x0, float))
    return TestFunction(TestKind.FUNDAMENTAL_GHAT, len(c), c)
