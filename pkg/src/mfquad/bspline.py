"""Uniform tensor-product B-splines on a box, unfitted to the domain.

The box is the domain's padded bounding box with each side rounded outward
(about its center) to a multiple of the knot spacing ``h_S``. Each axis
carries the clamped uniform knot vector with ``q``-fold end knots, hence
``N_i + q - 1`` univariate B-splines of order ``q``. Tensor basis functions
are numbered lexicographically with the first axis fastest.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DomainModel
from .kernels import bspline_basis
from .sparse import SparseMatrix, finalize, prune_zero_rows  # noqa: F401  (re-exported)

S_RATIO = 4.0


class OutsideBoxError(ValueError):
    """A point lies outside the spline box."""


@dataclass(frozen=True)
class TensorSplineSpace:
    dim: int
    q: int
    h_s: float
    lower: np.ndarray
    upper: np.ndarray
    n_intervals: tuple  # N_i per axis

    @property
    def knots(self) -> list[np.ndarray]:
        out = []
        for k in range(self.dim):
            inner = self.lower[k] + self.h_s * np.arange(1, self.n_intervals[k])
            out.append(
                np.concatenate([np.full(self.q, self.lower[k]), inner, np.full(self.q, self.upper[k])])
            )
        return out

    @property
    def counts(self) -> tuple:
        return tuple(n + self.q - 1 for n in self.n_intervals)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def strides(self) -> np.ndarray:
        return np.concatenate([[1], np.cumprod(self.counts)[:-1]]).astype(np.int64)

    def greville(self, axis: int) -> np.ndarray:
        """Greville abscissae; linear functions have these as coefficients."""
        t = self.knots[axis]
        q = self.q
        n = self.counts[axis]
        if q == 1:
            return 0.5 * (t[:-1] + t[1:])
        return np.array([t[j + 1 : j + q].mean() for j in range(n)])


def make_space_on_box(lower, upper, h_s: float, q: int) -> TensorSplineSpace:
    """Space on ``[lower, upper]`` rounded outward to multiples of ``h_s``."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    if q < 2:
        raise ValueError("q must be at least 2")
    if h_s <= 0:
        raise ValueError("h_s must be positive")
    span = upper - lower
    n = np.maximum(1, np.ceil(span / h_s - 1e-9)).astype(int)
    center = 0.5 * (lower + upper)
    lo = center - 0.5 * n * h_s
    hi = center + 0.5 * n * h_s
    return TensorSplineSpace(len(lower), q, float(h_s), lo, hi, tuple(int(v) for v in n))


def make_space(d: DomainModel, h: float, q: int, ratio: float = S_RATIO) -> TensorSplineSpace:
    if h <= 0:
        raise ValueError("h must be positive")
    box = d.bounding_box
    return make_space_on_box(box[0], box[1], ratio * h, q)


def _axis_eval(space: TensorSplineSpace, pts: np.ndarray):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    tol = 1e-12 * (1 + np.abs(space.upper - space.lower))
    if np.any(pts < space.lower - tol) or np.any(pts > space.upper + tol):
        raise OutsideBoxError("point outside the spline box")
    out = []
    for k, knots in enumerate(space.knots):
        out.append(bspline_basis(knots, space.q, np.clip(pts[:, k], space.lower[k], space.upper[k])))
    return out


def _tensor(space: TensorSplineSpace, axes, deriv: int | None):
    """Flat indices (m, q^d) and values of all active tensor B-splines.

    ``deriv`` is None for values or the axis of a first partial.
    """
    q, dim = space.q, space.dim
    strides = space.strides
    m = len(axes[0][0])
    idx = np.zeros((m,) + (q,) * dim, dtype=np.int64)
    val = np.ones((m,) + (q,) * dim)
    for k, (first, vals, ders) in enumerate(axes):
        shape = [m] + [1] * dim
        shape[k + 1] = q
        local = (first[:, None] + np.arange(q)[None, :]) * strides[k]
        idx = idx + local.reshape(shape)
        factor = ders if deriv == k else vals
        val = val * factor.reshape(shape)
    # axis 0 must vary fastest in the flattened q^d block as well
    order = tuple([0] + list(range(dim, 0, -1)))
    idx = idx.transpose(order).reshape(m, -1)
    val = val.transpose(order).reshape(m, -1)
    return idx, val


def eval_local(space: TensorSplineSpace, p, deriv=None) -> list[tuple[int, float]]:
    """(flat index, value) of the q^d B-splines whose support holds ``p``.

    ``deriv`` is None (values), an axis index, or a multi-index with at most
    one entry equal to 1.
    """
    if deriv is not None and not isinstance(deriv, (int, np.integer)):
        deriv = np.asarray(deriv, dtype=int)
        if deriv.sum() == 0:
            deriv = None
        elif deriv.sum() == 1 and deriv.max() == 1:
            deriv = int(np.argmax(deriv))
        else:
            raise ValueError("only values and first partials are supported")
    idx, val = _tensor(space, _axis_eval(space, np.asarray(p, float)[None]), deriv)
    return list(zip(idx[0].tolist(), val[0].tolist()))


def collocation(space: TensorSplineSpace, pts, deriv=None) -> SparseMatrix:
    """Rows: values (or a first partial) of every basis function at ``pts``."""
    pts = np.atleast_2d(np.asarray(pts, float))
    idx, val = _tensor(space, _axis_eval(space, pts), deriv)
    rows = np.repeat(np.arange(len(pts)), idx.shape[1])
    return finalize(SparseMatrix(len(pts), space.size, rows, idx.ravel(), val.ravel()))


def assemble_L_div_bsp(space: TensorSplineSpace, Y) -> SparseMatrix:
    """``[d_1 collocation | ... | d_d collocation]`` at the nodes of Y."""
    Y = np.atleast_2d(np.asarray(Y, float))
    axes = _axis_eval(space, Y)
    rows, cols, vals = [], [], []
    for k in range(space.dim):
        idx, val = _tensor(space, axes, k)
        rows.append(np.repeat(np.arange(len(Y)), idx.shape[1]))
        cols.append((idx + k * space.size).ravel())
        vals.append(val.ravel())
    m = SparseMatrix(len(Y), space.dim * space.size, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    return finalize(m)


def assemble_B_normal_bsp(space: TensorSplineSpace, Z, normals) -> SparseMatrix:
    """``[nu_1 * values | ... | nu_d * values]`` at the nodes of Z."""
    Z = np.atleast_2d(np.asarray(Z, float))
    normals = np.atleast_2d(np.asarray(normals, float))
    idx, val = _tensor(space, _axis_eval(space, Z), None)
    rows, cols, vals = [], [], []
    for k in range(space.dim):
        rows.append(np.repeat(np.arange(len(Z)), idx.shape[1]))
        cols.append((idx + k * space.size).ravel())
        vals.append((normals[:, k : k + 1] * val).ravel())
    m = SparseMatrix(len(Z), space.dim * space.size, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    return finalize(m)


def evaluate(space: TensorSplineSpace, coeffs, pts, deriv=None) -> np.ndarray:
    """Spline with the given coefficients (or its partial) at ``pts``."""
    return collocation(space, pts, deriv).to_scipy() @ np.asarray(coeffs, float)
