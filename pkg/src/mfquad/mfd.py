"""Meshless finite differences with polyharmonic kernels.

Weights of a linear functional (point value, first partial, Laplacian) at
a center are obtained from the kernel ``r^(2q-1)`` augmented with all
polynomials of total degree below ``q``. The saddle system is solved in a
local frame: coordinates shifted by the center and divided by the stencil
radius ``delta``, after which derivative weights are rescaled by
``delta^-1`` (first partials) or ``delta^-2`` (Laplacian).
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .nodegen import NeighborIndex
from .sparse import SparseMatrix, finalize

EXACTNESS_TOL = 1e-9
_CHUNK = 2048


class StencilDeficiencyError(np.linalg.LinAlgError):
    """The stencil is not unisolvent for the polynomial space."""

    def __init__(self, node: int, msg: str = ""):
        super().__init__(f"deficient stencil at node {node}" + (f": {msg}" if msg else ""))
        self.node = node


class Operator(enum.Enum):
    DIVERGENCE = "Divergence"
    LAPLACIAN = "Laplacian"


def poly_dim(q: int, d: int) -> int:
    """Dimension of the polynomials of total degree < q in d variables."""
    return comb(q - 1 + d, d)


@dataclass(frozen=True)
class StencilSpec:
    q: int
    d: int

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("q must be at least 2")
        if self.d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")

    @property
    def n_L(self) -> int:
        return 2 * poly_dim(self.q, self.d)

    @property
    def n_B(self) -> int:
        return 2 * poly_dim(self.q - 1, self.d)


def monomial_exponents(q: int, d: int) -> np.ndarray:
    """Exponent rows of all monomials of total degree < q, graded order."""
    out = []
    for deg in range(q):
        for e in itertools.product(range(deg + 1), repeat=d):
            if sum(e) == deg:
                out.append(e[::-1])
    return np.array(out, dtype=np.int64).reshape(-1, d)


def _functional_rhs(kind: str, k: int, r: np.ndarray, xi: np.ndarray, beta: int, exps: np.ndarray):
    """Functional applied to the kernels centered at ``xi`` and to the monomials, at 0.

    ``r = |xi|``; shapes ``(m, n)`` and ``(m, n, d)``.
    """
    d = exps.shape[1]
    m = r.shape[0]
    pi = np.zeros((m, len(exps)))
    with np.errstate(divide="ignore", invalid="ignore"):
        rb2 = np.where(r > 0, r ** (beta - 2), 0.0)
    if kind == "value":
        kappa = r**beta
        pi[:, 0] = 1.0
    elif kind == "partial":
        kappa = -beta * rb2 * xi[..., k]
        e = np.zeros(d, dtype=np.int64)
        e[k] = 1
        pi[:, np.flatnonzero((exps == e).all(axis=1))] = 1.0
    elif kind == "laplacian":
        kappa = beta * (beta + d - 2) * rb2
        for j in range(d):
            e = np.zeros(d, dtype=np.int64)
            e[j] = 2
            pi[:, np.flatnonzero((exps == e).all(axis=1))] = 2.0
    else:
        raise ValueError(kind)
    return kappa, pi


def _local_frame(centers: np.ndarray, stencils: np.ndarray):
    xi = stencils - centers[:, None, :]
    delta = np.sqrt(np.einsum("mnd,mnd->mn", xi, xi)).max(axis=1)
    delta = np.where(delta > 0, delta, 1.0)
    return xi / delta[:, None, None], delta


def _vandermonde(xi: np.ndarray, exps: np.ndarray) -> np.ndarray:
    # (m, n, M) products of coordinate powers
    return np.prod(xi[:, :, None, :] ** exps[None, None, :, :], axis=3)


def batch_weights(
    centers: np.ndarray,
    stencils: np.ndarray,
    q: int,
    functionals: list[tuple[str, int]],
    node_ids: np.ndarray | None = None,
) -> np.ndarray:
    """Weights of several functionals for many (center, stencil) pairs.

    ``centers`` is ``(m, d)``, ``stencils`` ``(m, n, d)``; ``functionals``
    lists ``("value", 0)``, ``("partial", k)`` or ``("laplacian", 0)``.
    Returns ``(m, len(functionals), n)``. Raises
    :class:`StencilDeficiencyError` when a saddle matrix is singular or the
    solution fails the polynomial exactness check.
    """
    centers = np.asarray(centers, dtype=float)
    stencils = np.asarray(stencils, dtype=float)
    m, n, d = stencils.shape
    if node_ids is None:
        node_ids = np.arange(m)
    exps = monomial_exponents(q, d)
    npoly = len(exps)
    if n < npoly:
        raise ValueError(f"stencil of {n} nodes cannot carry {npoly} polynomial conditions")
    beta = 2 * q - 1
    out = np.empty((m, len(functionals), n))
    for s in range(0, m, _CHUNK):
        sl = slice(s, min(m, s + _CHUNK))
        xi, delta = _local_frame(centers[sl], stencils[sl])
        mm = xi.shape[0]
        diff = xi[:, :, None, :] - xi[:, None, :, :]
        kmat = np.sqrt(np.einsum("mijd,mijd->mij", diff, diff)) ** beta
        pmat = _vandermonde(xi, exps)
        sys = np.zeros((mm, n + npoly, n + npoly))
        sys[:, :n, :n] = kmat
        sys[:, :n, n:] = pmat
        sys[:, n:, :n] = pmat.transpose(0, 2, 1)
        r = np.sqrt(np.einsum("mnd,mnd->mn", xi, xi))
        rhs = np.empty((mm, n + npoly, len(functionals)))
        scale = np.empty((mm, len(functionals)))
        for f, (kind, k) in enumerate(functionals):
            kappa, pi = _functional_rhs(kind, k, r, xi, beta, exps)
            rhs[:, :n, f] = kappa
            rhs[:, n:, f] = pi
            scale[:, f] = {"value": 1.0, "partial": 1.0 / delta, "laplacian": 1.0 / delta**2}[kind] * np.ones(mm)
        try:
            sol = np.linalg.solve(sys, rhs)
        except np.linalg.LinAlgError:
            for i in range(mm):
                try:
                    np.linalg.solve(sys[i], rhs[i])
                except np.linalg.LinAlgError:
                    raise StencilDeficiencyError(int(node_ids[sl][i]), "singular saddle matrix") from None
            raise
        lam = sol[:, :n, :]
        # polynomial exactness: P^T lambda must equal the functional on the basis
        res = np.abs(np.einsum("mnp,mnf->mpf", pmat, lam) - rhs[:, n:, :])
        wscale = 1.0 + np.abs(lam).sum(axis=1)
        bad = (res.max(axis=1) > EXACTNESS_TOL * wscale) | ~np.isfinite(lam).all(axis=1)
        if bad.any():
            i = int(np.flatnonzero(bad.any(axis=1))[0])
            raise StencilDeficiencyError(int(node_ids[sl][i]), "polynomial exactness lost")
        out[sl] = lam.transpose(0, 2, 1) * scale[:, :, None]
    return out


def polyharmonic_weights(center, stencil, functional: str | tuple, q: int) -> np.ndarray:
    """Weights of one functional at ``center`` on the stencil nodes.

    ``functional`` is ``"value"``, ``"laplacian"``, ``("partial", k)`` or
    an int ``k`` (short for the partial in direction ``k``).
    """
    if isinstance(functional, (int, np.integer)):
        functional = ("partial", int(functional))
    elif isinstance(functional, str):
        functional = (functional, 0)
    center = np.atleast_1d(np.asarray(center, dtype=float))
    stencil = np.asarray(stencil, dtype=float).reshape(-1, center.shape[0])
    return batch_weights(center[None], stencil[None], q, [functional])[0, 0]


def _neighbors(X: np.ndarray, P: np.ndarray, k: int) -> np.ndarray:
    if k > len(X):
        raise ValueError(f"stencil size {k} exceeds the {len(X)} discretization nodes")
    return NeighborIndex(X).query(P, k).reshape(len(P), k)


def _scatter(nrows: int, ncols: int, rows, cols, vals) -> SparseMatrix:
    return finalize(SparseMatrix(nrows, ncols, rows.ravel(), cols.ravel(), vals.ravel()))


def assemble_L_div(X: np.ndarray, Y: np.ndarray, spec: StencilSpec) -> SparseMatrix:
    """Rows of first-partial weights, column block k for component k."""
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    nx, d = X.shape
    idx = _neighbors(X, Y, spec.n_L)
    w = batch_weights(Y, X[idx], spec.q, [("partial", k) for k in range(d)])
    rows = np.broadcast_to(np.arange(len(Y))[:, None, None], w.shape)
    cols = idx[:, None, :] + nx * np.arange(d)[None, :, None]
    return _scatter(len(Y), d * nx, rows, cols, w)


def assemble_B_normal(X: np.ndarray, Z: np.ndarray, normals: np.ndarray, spec: StencilSpec) -> SparseMatrix:
    """Rows ``nu_k(z_i) * value weights`` of order q-1, component-major columns."""
    X, Z = np.asarray(X, float), np.asarray(Z, float)
    nx, d = X.shape
    idx = _neighbors(X, Z, spec.n_B)
    w = batch_weights(Z, X[idx], spec.q - 1, [("value", 0)])[:, 0, :]
    vals = np.asarray(normals)[:, :, None] * w[:, None, :]
    rows = np.broadcast_to(np.arange(len(Z))[:, None, None], vals.shape)
    cols = idx[:, None, :] + nx * np.arange(d)[None, :, None]
    return _scatter(len(Z), d * nx, rows, cols, vals)


def assemble_L_laplacian(X: np.ndarray, Y: np.ndarray, q: int) -> SparseMatrix:
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    spec = StencilSpec(q, X.shape[1])
    idx = _neighbors(X, Y, spec.n_L)
    w = batch_weights(Y, X[idx], q, [("laplacian", 0)])[:, 0, :]
    rows = np.broadcast_to(np.arange(len(Y))[:, None], w.shape)
    return _scatter(len(Y), len(X), rows, idx, w)


def assemble_B_dnu(X: np.ndarray, Z: np.ndarray, normals: np.ndarray, q: int) -> SparseMatrix:
    """Normal derivative rows from first-partial weights of order q-1."""
    X, Z = np.asarray(X, float), np.asarray(Z, float)
    d = X.shape[1]
    spec = StencilSpec(q, d)
    idx = _neighbors(X, Z, spec.n_B)
    w = batch_weights(Z, X[idx], q - 1, [("partial", k) for k in range(d)])
    vals = np.einsum("mk,mkn->mn", np.asarray(normals), w)
    rows = np.broadcast_to(np.arange(len(Z))[:, None], vals.shape)
    return _scatter(len(Z), len(X), rows, idx, vals)


@dataclass(frozen=True)
class DiffMatrices:
    L: SparseMatrix
    B: SparseMatrix
    operator: Operator


def assemble(X, Y, Z, normals, q: int, operator: Operator = Operator.DIVERGENCE) -> DiffMatrices:
    X = np.asarray(X, float)
    if operator is Operator.DIVERGENCE:
        spec = StencilSpec(q, X.shape[1])
        return DiffMatrices(assemble_L_div(X, Y, spec), assemble_B_normal(X, Z, normals, spec), operator)
    return DiffMatrices(assemble_L_laplacian(X, Y, q), assemble_B_dnu(X, Z, normals, q), operator)
