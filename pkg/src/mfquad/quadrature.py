"""Moment-free quadrature weights from discretized divergence operators.

Given interior nodes Y, boundary nodes Z with normals, and discrete
operators ``L`` (divergence at Y) and ``B`` (normal trace at Z) acting on
the same coefficient vector, the weights solve

    [ L^T        -B^T       ] [w]   [ 0                 ]
    [ fhat|_Y^T  -ghat|_Z^T ] [v] = [ int fhat - int ghat ]

in the minimum 2-norm sense. The first block makes the combined rule
``sum w_i f(y_i) - sum v_i g(z_i)`` vanish on every discrete pair
``(div F, nu.F)``; the constraint rows fix the scale from one known
combined moment.
"""
from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import bspline, mfd
from .geometry import DomainModel, inside
from .nodegen import NodeSet, make_X
from .sparse import (
    DEFAULT_RANK_TOL_2D,
    DEFAULT_RANK_TOL_3D,
    MinNormSolveReport,
    SparseMatrix,
    finalize,
    prune_zero_rows,
    solve_min_norm_chol,
    solve_min_norm_qr,
    spqr_available,
)

logger = logging.getLogger(__name__)


class QuadratureError(ValueError):
    """Weights cannot be computed for this configuration."""


class OverdeterminedError(QuadratureError):
    """More equations than unknowns, or stencils larger than X."""


class Method(enum.Enum):
    MFD = "MFD"
    BSP = "BSP"


class ConstraintKind(enum.Enum):
    BOUNDARY_CONSTANT = "BoundaryConstant"  # (fhat, ghat) = (0, 1)
    INTERIOR_CONSTANT = "InteriorConstant"  # (1, 0)
    COMBINED = "Combined"  # (1, -1)
    FUNDAMENTAL_SOLUTION = "FundamentalSolution"  # (0, d_nu Phi(., x0))
    BOTH = "Both"  # (1, 0) and (0, 1)


_ALIASES = {
    "0,1": ConstraintKind.BOUNDARY_CONSTANT,
    "boundary": ConstraintKind.BOUNDARY_CONSTANT,
    "1,0": ConstraintKind.INTERIOR_CONSTANT,
    "interior": ConstraintKind.INTERIOR_CONSTANT,
    "1,-1": ConstraintKind.COMBINED,
    "combined": ConstraintKind.COMBINED,
    "fundamental": ConstraintKind.FUNDAMENTAL_SOLUTION,
    "both": ConstraintKind.BOTH,
}


def parse_constraint(name: str | ConstraintKind) -> ConstraintKind:
    if isinstance(name, ConstraintKind):
        return name
    key = str(name).strip()
    for k in ConstraintKind:
        if key == k.value or key.upper() == k.name:
            return k
    if key.lower() in _ALIASES:
        return _ALIASES[key.lower()]
    raise ValueError(f"unknown constraint {name!r}")


def unit_ball_volume(d: int) -> float:
    return {1: 2.0, 2: np.pi, 3: 4.0 * np.pi / 3.0}[d]


def fundamental_ghat(d: DomainModel | int, z, nu, x0=None) -> np.ndarray | float:
    """Normal derivative of the fundamental solution of -Laplace centered at x0.

    ``nu.(z - x0) / (d * omega_d * |z - x0|^d)``; its boundary integral over
    any domain containing x0 is 1. ``d`` is a domain (supplying ``x0``) or
    the dimension.
    """
    if isinstance(d, DomainModel):
        dim = d.dim
        x0 = d.x0 if x0 is None else x0
    else:
        dim = int(d)
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    nu = np.atleast_2d(np.asarray(nu, dtype=float))
    diff = z - np.asarray(x0, dtype=float)
    r = np.linalg.norm(diff, axis=1)
    if np.any(r == 0):
        raise QuadratureError("boundary node coincides with the fundamental-solution center")
    val = np.einsum("ij,ij->i", nu, diff) / (dim * unit_ball_volume(dim) * r**dim)
    return float(val[0]) if single else val


@dataclass(frozen=True)
class ConstraintSpec:
    kind: ConstraintKind = ConstraintKind.BOUNDARY_CONSTANT
    x0: np.ndarray | None = None

    def check(self, d: DomainModel) -> None:
        k = self.kind
        need_int = k in (ConstraintKind.INTERIOR_CONSTANT, ConstraintKind.COMBINED, ConstraintKind.BOTH)
        need_bnd = k in (ConstraintKind.BOUNDARY_CONSTANT, ConstraintKind.COMBINED, ConstraintKind.BOTH)
        if need_int and d.measure_interior is None:
            raise QuadratureError(f"{k.value} needs |Omega|, unknown for {d.name}")
        if need_bnd and d.measure_boundary is None:
            raise QuadratureError(f"{k.value} needs |dOmega|, unknown for {d.name}")
        if k is ConstraintKind.FUNDAMENTAL_SOLUTION:
            x0 = self.center(d)
            if not inside(d, x0):
                raise QuadratureError(f"x0 = {x0} is not inside {d.name}")

    def center(self, d: DomainModel) -> np.ndarray:
        return np.asarray(d.x0 if self.x0 is None else self.x0, dtype=float)

    def rows(self, d: DomainModel, Y: np.ndarray, Z: np.ndarray, normals: np.ndarray):
        """Constraint rows as (coefficients over Y, over Z, right-hand side).

        The general row is ``(fhat|_Y, -ghat|_Z)`` with right-hand side
        ``int fhat - int ghat``; the (0, 1) row is used with both sides
        negated, ``(0, 1) . (w, v) = |dOmega|``, which has the same solutions.
        """
        self.check(d)
        ny, nz = len(Y), len(Z)
        k = self.kind
        if k is ConstraintKind.BOUNDARY_CONSTANT:
            return [(np.zeros(ny), np.ones(nz), d.measure_boundary)]
        if k is ConstraintKind.INTERIOR_CONSTANT:
            return [(np.ones(ny), np.zeros(nz), d.measure_interior)]
        if k is ConstraintKind.COMBINED:
            return [(np.ones(ny), np.ones(nz), d.measure_interior + d.measure_boundary)]
        if k is ConstraintKind.FUNDAMENTAL_SOLUTION:
            g = fundamental_ghat(d.dim, Z, normals, self.center(d))
            return [(np.zeros(ny), -g, -1.0)]
        return [
            (np.ones(ny), np.zeros(nz), d.measure_interior),
            (np.zeros(ny), -np.ones(nz), -d.measure_boundary),
        ]


@dataclass(frozen=True)
class QuadratureRule:
    """Paired weights: ``w`` over Y (interior set) and ``v`` over Z (boundary)."""

    w: np.ndarray
    v: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    normals: np.ndarray
    K_w: float
    K_v: float
    K_w_normalized: bool
    K_v_normalized: bool
    residual_inf: float
    rhs_inf: float
    method: Method
    q: int
    h: float
    seed: int
    constraint: ConstraintKind
    solve: MinNormSolveReport | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_y(self) -> int:
        return len(self.w)

    @property
    def n_z(self) -> int:
        return len(self.v)


def apply_rule(rule: QuadratureRule, f=None, g=None) -> float:
    """``sum w_i f(y_i) - sum v_i g(z_i)``; a missing sample vector drops its term."""
    total = 0.0
    if f is not None:
        f = np.asarray(f, dtype=float)
        if f.shape != rule.w.shape:
            raise ValueError(f"f has {f.shape[0] if f.ndim else 1} samples, Y has {rule.n_y} nodes")
        total += float(rule.w @ f)
    if g is not None:
        g = np.asarray(g, dtype=float)
        if g.shape != rule.v.shape:
            raise ValueError(f"g has {g.shape[0] if g.ndim else 1} samples, Z has {rule.n_z} nodes")
        total -= float(rule.v @ g)
    return total


def integrate_interior(rule: QuadratureRule, func) -> float:
    """Interior rule ``sum w_i f(y_i)`` for a vectorized callable."""
    return float(rule.w @ np.asarray(func(rule.Y), dtype=float))


def integrate_boundary(rule: QuadratureRule, func) -> float:
    """Boundary rule ``sum v_i g(z_i)`` for a vectorized callable."""
    return float(rule.v @ np.asarray(func(rule.Z), dtype=float))


def build_system(
    L: SparseMatrix,
    B: SparseMatrix,
    constraint: ConstraintSpec,
    Y: np.ndarray,
    Z: np.ndarray,
    normals: np.ndarray,
    d: DomainModel,
    prune: bool = True,
) -> tuple[SparseMatrix, np.ndarray, np.ndarray]:
    """Assemble ``A`` and ``b``; returns ``(A, b, kept_rows)``.

    Rows of ``[L^T, -B^T]`` that are structurally empty (coefficients that
    touch no node) are removed when ``prune`` is set; ``kept_rows`` maps the
    remaining rows to the unpruned numbering.
    """
    if L.ncols != B.ncols:
        raise QuadratureError(f"L has {L.ncols} columns but B has {B.ncols}")
    if L.nrows != len(Y) or B.nrows != len(Z):
        raise QuadratureError("L rows must match Y and B rows must match Z")
    top = sp.hstack([L.to_scipy().T, -B.to_scipy().T], format="csr")
    rows = constraint.rows(d, Y, Z, normals)
    cons = []
    rhs = []
    for fy, gz, val in rows:
        r = np.concatenate([fy, gz])
        if not np.any(r):
            raise QuadratureError("constraint row is identically zero")
        cons.append(r)
        rhs.append(val)
    full = sp.vstack([top, sp.csr_matrix(np.array(cons))], format="coo")
    A = finalize(SparseMatrix(full.shape[0], full.shape[1], full.row, full.col, full.data))
    b = np.concatenate([np.zeros(top.shape[0]), np.array(rhs, dtype=float)])
    kept = np.arange(A.nrows)
    if prune:
        A, kept = prune_zero_rows(A)
        b = b[kept]
    return A, b, kept


def check_discrete_incompatibility(L: SparseMatrix, B: SparseMatrix, fhat_y, ghat_z, tol: float = 1e-8) -> bool:
    """True if ``L c = fhat|_Y, B c = ghat|_Z`` has no solution (to ``tol``).

    This is the condition under which the weight system with the matching
    constraint row is consistent. The least-squares residual is compared
    with ``tol * max|(fhat, ghat)|``.
    """
    M = sp.vstack([L.to_scipy(), B.to_scipy()], format="csr")
    rhs = np.concatenate([np.asarray(fhat_y, float), np.asarray(ghat_z, float)])
    scale = max(float(np.max(np.abs(rhs), initial=0.0)), 1e-300)
    if M.shape[1] <= 4000:
        c, *_ = np.linalg.lstsq(M.toarray(), rhs, rcond=None)
    elif spqr_available():
        import sparseqr

        c = np.asarray(sparseqr.solve(M.tocoo(), rhs, tolerance=0)).ravel()
    else:
        c = sp.linalg.lsqr(M, rhs, atol=1e-15, btol=1e-15, iter_lim=20 * M.shape[1])[0]
    res = float(np.max(np.abs(M @ c - rhs)))
    return res > tol * scale


def _stability(weights: np.ndarray, measure: float | None) -> tuple[float, bool]:
    norm1 = float(np.abs(weights).sum())
    if measure:
        return norm1 / measure, True
    return norm1, False


def compute_weights(
    d: DomainModel,
    nodes: NodeSet,
    method: Method | str,
    q: int,
    constraint: ConstraintSpec | ConstraintKind | str = ConstraintKind.BOUNDARY_CONSTANT,
    solver: str = "auto",
    operator: mfd.Operator | str = mfd.Operator.DIVERGENCE,
    X: np.ndarray | None = None,
    rank_tol: float | None = None,
    backend: str = "auto",
) -> QuadratureRule:
    """Quadrature weights on ``nodes`` by the MFD or BSP pipeline.

    ``solver`` is ``"qr"``, ``"chol"`` or ``"auto"`` (normal equations for
    3D BSP, QR otherwise). For MFD the discretization nodes X default to a
    closed advancing-front set at spacing ``1.6 h`` (divergence operator) or
    to Y itself (Laplacian operator).
    """
    method = Method(method.upper()) if isinstance(method, str) else method
    operator = mfd.Operator(operator) if isinstance(operator, str) else operator
    if isinstance(constraint, (str, ConstraintKind)):
        constraint = ConstraintSpec(parse_constraint(constraint))
    constraint.check(d)
    Y, Z, normals = nodes.Y, nodes.Z, nodes.normals
    dim = d.dim
    meta = {"domain": d.name, "operator": operator.value}
    if method is Method.MFD:
        if X is None:
            X = Y if operator is mfd.Operator.LAPLACIAN else make_X(d, nodes.h, nodes.seed).Y
        X = np.asarray(X, dtype=float)
        spec = mfd.StencilSpec(q, dim)
        if spec.n_L > len(X):
            raise OverdeterminedError(f"n_L = {spec.n_L} exceeds N_X = {len(X)}")
        ops = mfd.assemble(X, Y, Z, normals, q, operator)
        L, B = ops.L, ops.B
        meta["N_X"] = len(X)
    else:
        if operator is not mfd.Operator.DIVERGENCE:
            raise QuadratureError("the spline pipeline only supports the divergence operator")
        space = bspline.make_space(d, nodes.h, q)
        L = bspline.assemble_L_div_bsp(space, Y)
        B = bspline.assemble_B_normal_bsp(space, Z, normals)
        meta["box"] = (space.lower.tolist(), space.upper.tolist())
        meta["N_S"] = space.size
    A, b, kept = build_system(L, B, constraint, Y, Z, normals, d)
    meta["rows_pruned"] = int(L.ncols - np.count_nonzero(kept < L.ncols))
    if A.nrows > A.ncols:
        raise OverdeterminedError(f"system has {A.nrows} equations for {A.ncols} unknowns")
    if solver == "auto":
        solver = "chol" if (method is Method.BSP and dim == 3) else "qr"
    if rank_tol is None:
        rank_tol = DEFAULT_RANK_TOL_2D if dim == 2 else DEFAULT_RANK_TOL_3D
    if solver == "qr":
        rep = solve_min_norm_qr(A, b, rank_tol=rank_tol, backend=backend)
    elif solver == "chol":
        rep = solve_min_norm_chol(A, b, backend=backend)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    x = rep.solution
    w, v = x[: len(Y)], x[len(Y) :]
    K_w, nw = _stability(w, d.measure_interior)
    K_v, nv = _stability(v, d.measure_boundary)
    return QuadratureRule(
        w, v, Y, Z, normals, K_w, K_v, nw, nv, rep.residual_inf, float(np.max(np.abs(b))), method, q,
        float(nodes.h), int(nodes.seed), constraint.kind, rep, meta,
    )


# --- CSV ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_weights(rule: QuadratureRule, path_or_buf) -> None:
    dim = rule.Y.shape[1] if rule.Y.size else rule.Z.shape[1]
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        fh.write(
            f"# method={rule.method.value} q={rule.q} h={_fmt(rule.h)} seed={rule.seed} "
            f"constraint={rule.constraint.value} residual={_fmt(rule.residual_inf)} "
            f"K_w={_fmt(rule.K_w)} K_v={_fmt(rule.K_v)}\n"
        )
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind"] + ["x", "y", "z"][:dim] + ["weight"])
        for p, wt in zip(rule.Y, rule.w):
            w.writerow(["interior"] + [_fmt(c) for c in p] + [_fmt(wt)])
        for p, wt in zip(rule.Z, rule.v):
            w.writerow(["boundary"] + [_fmt(c) for c in p] + [_fmt(wt)])
    finally:
        if own:
            fh.close()


def read_weights(path_or_buf) -> tuple[dict, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (metadata, Y, w, Z, v) from a weight CSV."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, newline="") if own else path_or_buf
    try:
        text = fh.read()
    finally:
        if own:
            fh.close()
    lines = text.splitlines()
    meta = {}
    if lines and lines[0].startswith("#"):
        for tok in lines[0][1:].split():
            k, _, v = tok.partition("=")
            meta[k] = v
        lines = lines[1:]
    reader = csv.reader(io.StringIO("\n".join(lines)))
    header = next(reader)
    dim = len(header) - 2
    ys, ws, zs, vs = [], [], [], []
    for row in reader:
        if not row:
            continue
        p = [float(c) for c in row[1 : 1 + dim]]
        if row[0] == "interior":
            ys.append(p)
            ws.append(float(row[-1]))
        else:
            zs.append(p)
            vs.append(float(row[-1]))
    return (
        meta,
        np.array(ys).reshape(-1, dim),
        np.array(ws),
        np.array(zs).reshape(-1, dim),
        np.array(vs),
    )
