"""Reference integrals from boundary parametrizations.

Interior integrals use ``F = (int_{x0}^{x} f dt, 0[, 0])``, so that
``int_Omega f = int_dOmega nu_1 F_1``, and integrate over the parameter
domain of each boundary patch: adaptive Gauss-Kronrod (QUADPACK) on
intervals, adaptive tensor Gauss-Legendre on rectangles. Boundary
integrals of ``g`` use the area element directly. A secondary oracle
integrates in polar coordinates where such a map of the domain exists.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy import integrate

from ..geometry import CurvePatch, DomainModel
from .functions import TestFunction

REFERENCE_TOL = 1e-13
MAX_DEPTH = 40
GL_ORDER = 12
QUAD_LIMIT = 400
# absolute error accepted for integrals (or boundary pieces) near zero
PATCH_ABS_FLOOR = 5e-14


class ReferenceUnavailable(ValueError):
    """The domain has no closed-form boundary parametrization."""


class ReferenceAccuracyError(ArithmeticError):
    """The tolerance was not met within the subdivision budget."""

    def __init__(self, msg: str, estimate: float, error: float):
        super().__init__(f"{msg}: estimate {estimate!r}, error estimate {error:.3g}")
        self.estimate = estimate
        self.error = error


def _gauss_2d(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    u = (x + 1) / 2
    w = w / 2
    uu, vv = np.meshgrid(u, u, indexing="ij")
    return uu.ravel(), vv.ravel(), np.outer(w, w).ravel()


def adaptive_rect(func, rect, tol: float = REFERENCE_TOL, max_depth: int = MAX_DEPTH, order: int = GL_ORDER) -> float:
    """Integral of ``func(u, v)`` over ``[u0,u1] x [v0,v1]``.

    A cell is accepted when its tensor Gauss-Legendre value agrees with the
    sum over its four children to within its area share of
    ``max(tol * |I|, PATCH_ABS_FLOOR)``; otherwise the children are refined
    in turn.
    """
    gu, gv, gw = _gauss_2d(order)
    u0, u1, v0, v1 = rect
    total_area = (u1 - u0) * (v1 - v0)

    def rule(cells: np.ndarray) -> np.ndarray:
        du = cells[:, 1] - cells[:, 0]
        dv = cells[:, 3] - cells[:, 2]
        uu = cells[:, :1] + du[:, None] * gu[None, :]
        vv = cells[:, 2:3] + dv[:, None] * gv[None, :]
        vals = np.asarray(func(uu.ravel(), vv.ravel()), dtype=float).reshape(len(cells), -1)
        return (vals @ gw) * du * dv

    def split(cells: np.ndarray) -> np.ndarray:
        um = (cells[:, 0] + cells[:, 1]) / 2
        vm = (cells[:, 2] + cells[:, 3]) / 2
        kids = [
            np.stack([cells[:, 0], um, cells[:, 2], vm], axis=1),
            np.stack([um, cells[:, 1], cells[:, 2], vm], axis=1),
            np.stack([cells[:, 0], um, vm, cells[:, 3]], axis=1),
            np.stack([um, cells[:, 1], vm, cells[:, 3]], axis=1),
        ]
        return np.stack(kids, axis=1).reshape(-1, 4)

    cells = np.array([[u0, u1, v0, v1]], dtype=float)
    parent = rule(cells)
    done = 0.0
    estimate = float(parent.sum())
    for _ in range(max_depth):
        kids = split(cells)
        kv = rule(kids).reshape(-1, 4)
        refined = kv.sum(axis=1)
        err = np.abs(refined - parent)
        estimate = done + float(refined.sum())
        scale = max(tol * abs(estimate), PATCH_ABS_FLOOR)
        share = (cells[:, 1] - cells[:, 0]) * (cells[:, 3] - cells[:, 2]) / total_area
        ok = err <= scale * share
        done += float(refined[ok].sum())
        if ok.all():
            return done
        cells = kids.reshape(-1, 4, 4)[~ok].reshape(-1, 4)
        parent = kv[~ok].ravel()
    raise ReferenceAccuracyError("adaptive cubature did not converge", estimate, float(err.max()))


def _quad(func, a: float, b: float, tol: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(lambda t: float(func(np.array([t]))[0]), a, b, epsabs=PATCH_ABS_FLOOR,
                                  epsrel=tol, limit=QUAD_LIMIT)
    if err > max(tol * abs(val), PATCH_ABS_FLOOR):
        raise ReferenceAccuracyError("adaptive Gauss-Kronrod did not converge", val, err)
    return val


def _patch_integral(patch, integrand_on_patch, tol: float) -> float:
    if isinstance(patch, CurvePatch):
        return _quad(integrand_on_patch, patch.t0, patch.t1, tol)
    return adaptive_rect(integrand_on_patch, patch.rect, tol)


def interior_integral(d: DomainModel, fn: TestFunction, tol: float = REFERENCE_TOL) -> float:
    """``int_Omega f`` through the divergence theorem."""
    if not d.patches:
        raise ReferenceUnavailable(f"{d.name} has no boundary parametrization")
    x0 = float(d.bounding_box[0][0])
    total = 0.0
    for patch in d.patches:
        if isinstance(patch, CurvePatch):
            def h(t, patch=patch):
                return patch.weighted_normal(t)[:, 0] * fn.x_antiderivative(patch.point(t), x0)
        else:
            def h(u, v, patch=patch):
                return patch.weighted_normal(u, v)[:, 0] * fn.x_antiderivative(patch.point(u, v), x0)
        total += _patch_integral(patch, h, tol)
    return total


def boundary_integral(d: DomainModel, fn: TestFunction, tol: float = REFERENCE_TOL) -> float:
    """``int_dOmega g``; normals are passed for integrands that need them."""
    if not d.patches:
        raise ReferenceUnavailable(f"{d.name} has no boundary parametrization")
    total = 0.0
    for patch in d.patches:
        if isinstance(patch, CurvePatch):
            def h(t, patch=patch):
                nrm = patch.normal(t) if fn.needs_normals else None
                return fn(patch.point(t), nrm) * patch.area_element(t)
        else:
            def h(u, v, patch=patch):
                nrm = patch.normal(u, v) if fn.needs_normals else None
                return fn(patch.point(u, v), nrm) * patch.area_element(u, v)
        total += _patch_integral(patch, h, tol)
    return total


_CACHE: dict = {}


def reference_integral(d: DomainModel, fn: TestFunction, target: str = "interior") -> float:
    """Cached reference value; ``target`` is ``"interior"`` or ``"boundary"``."""
    target = target.lower()
    if target not in ("interior", "boundary"):
        raise ValueError(f"unknown target {target!r}")
    key = (d.name, id(d), fn, target)
    if key not in _CACHE:
        compute = interior_integral if target == "interior" else boundary_integral
        _CACHE[key] = (d, compute(d, fn))
    return _CACHE[key][1]


def polar_reference(d: DomainModel, fn: TestFunction, tol: float = REFERENCE_TOL) -> float:
    """Interior integral in (scaled) polar coordinates, for the ellipse and the sector."""
    if d.name == "ellipse":
        a = float(d.implicit.tight_box[1][0])
        b = float(d.implicit.tight_box[1][1])
        theta1 = 2 * np.pi
    elif d.name == "disk-sector":
        a = b = 1.0
        theta1 = 1.5 * np.pi
    else:
        raise ReferenceUnavailable(f"no polar map for {d.name}")

    def h(r, t):
        p = np.stack([a * r * np.cos(t), b * r * np.sin(t)], axis=1)
        return fn(p) * a * b * r

    return adaptive_rect(h, (0.0, 1.0, 0.0, theta1), tol)
