"""Sparse matrices and minimum 2-norm solutions of underdetermined systems.

Two solver routes are provided:

* :func:`solve_min_norm_qr` factors ``A^T`` with a rank-revealing QR
  (SuiteSparseQR when the ``sparseqr`` bindings are importable, LAPACK
  ``geqp3`` otherwise) and returns the minimum-norm solution restricted to
  the numerical row space of ``A``.
* :func:`solve_min_norm_chol` solves the regularized normal equations of
  the second kind ``(A A^T + omega I) y = b`` and returns ``x = A^T y``,
  doubling ``omega`` until the Cholesky factorization succeeds (CHOLMOD
  when ``scikit-sparse`` is importable, dense LAPACK otherwise).
"""
from __future__ import annotations

import enum
import functools
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg  # noqa: F401  (binds sp.linalg)

from ._blas import pin_openblas_kernels

logger = logging.getLogger(__name__)

# a no-op when the package __init__ already ran it
pin_openblas_kernels()

try:
    import sparseqr as _spqr
except ImportError:  # pragma: no cover - depends on the optional extra
    _spqr = None

try:
    from sksparse import cholmod as _cholmod
except ImportError:  # pragma: no cover - depends on the optional extra
    _cholmod = None

DEFAULT_RANK_TOL_2D = 1e-15
DEFAULT_RANK_TOL_3D = 1e-12
# auto backend: accept a sparse QR solution only below this scaled residual
AUTO_RESIDUAL_TOL = 1e-10
DENSE_MAX_ENTRIES = 200_000_000
OMEGA_BASE = 4e-16
OMEGA_MAX_DOUBLINGS = 40


class StructuralError(ValueError):
    """Shapes or indices are inconsistent."""


class DataError(ValueError):
    """Input contains non-finite values."""


class SolverError(RuntimeError):
    """The linear solver could not produce a solution."""


class SolverPath(enum.Enum):
    RANK_REVEALING_QR = "RankRevealingQR"
    REGULARIZED_NORMAL_EQUATIONS = "RegularizedNormalEquations"


class SparseMatrix:
    """Triplet-assembled sparse matrix, immutable once finalized.

    Entries are accumulated with :meth:`add`; :func:`finalize` sums
    duplicates, drops explicit zeros and sorts entries row-major. A
    finalized matrix exposes CSR arrays and converts to scipy with
    :meth:`to_scipy`.
    """

    def __init__(self, nrows: int, ncols: int, rows=(), cols=(), vals=()):
        if nrows < 0 or ncols < 0:
            raise StructuralError("matrix dimensions must be non-negative")
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self.finalized = False
        self._csr: sp.csr_matrix | None = None
        if len(rows):
            self.add(rows, cols, vals)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    def add(self, rows, cols, vals) -> None:
        if self.finalized:
            raise StructuralError("cannot add entries to a finalized matrix")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise StructuralError("rows, cols and vals must have equal length")
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(vals)

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (rows, cols, vals); canonical order once finalized."""
        if self.finalized:
            coo = self._csr.tocoo()
            return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()
        if not self._rows:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), np.zeros(0)
        return (
            np.concatenate(self._rows),
            np.concatenate(self._cols),
            np.concatenate(self._vals),
        )

    @property
    def nnz(self) -> int:
        if self.finalized:
            return int(self._csr.nnz)
        return int(sum(len(v) for v in self._vals))

    def to_scipy(self) -> sp.csr_matrix:
        if not self.finalized:
            raise StructuralError("matrix must be finalized first")
        return self._csr

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        coo = sp.coo_matrix(m)
        out = cls(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data)
        return finalize(out)

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        r, c = np.nonzero(a)
        return finalize(cls(a.shape[0], a.shape[1], r, c, a[r, c]))

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.to_scipy().indptr)

    def __repr__(self) -> str:
        state = "finalized" if self.finalized else "open"
        return f"SparseMatrix({self.nrows}x{self.ncols}, nnz={self.nnz}, {state})"


def finalize(m: SparseMatrix) -> SparseMatrix:
    """Sum duplicate entries, drop zeros, sort row-major; returns a new matrix."""
    if m.finalized:
        raise StructuralError("matrix is already finalized")
    rows, cols, vals = m.triplets()
    if rows.size:
        if rows.min() < 0 or rows.max() >= m.nrows or cols.min() < 0 or cols.max() >= m.ncols:
            raise StructuralError("entry index out of bounds")
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size:
        start = np.ones(rows.size, dtype=bool)
        start[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        idx = np.flatnonzero(start)
        # np.add.reduceat sums each run left to right, so results are deterministic
        vals = np.add.reduceat(vals, idx)
        rows, cols = rows[idx], cols[idx]
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    indptr = np.zeros(m.nrows + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    out = SparseMatrix(m.nrows, m.ncols)
    out._csr = sp.csr_matrix((vals, cols, indptr), shape=m.shape)
    out._csr.has_canonical_format = True
    out.finalized = True
    return out


def spmv(a: SparseMatrix, x) -> np.ndarray:
    """Compute ``A @ x`` with a fixed row-wise summation order."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != a.ncols:
        raise StructuralError(f"vector of length {x.shape} does not match {a.shape}")
    return a.to_scipy() @ x


def vstack(blocks: list[SparseMatrix]) -> SparseMatrix:
    m = sp.vstack([b.to_scipy() for b in blocks], format="coo")
    return SparseMatrix.from_scipy(m)


def hstack(blocks: list[SparseMatrix]) -> SparseMatrix:
    m = sp.hstack([b.to_scipy() for b in blocks], format="coo")
    return SparseMatrix.from_scipy(m)


def transpose(a: SparseMatrix) -> SparseMatrix:
    return SparseMatrix.from_scipy(a.to_scipy().T)


def prune_zero_rows(a: SparseMatrix) -> tuple[SparseMatrix, np.ndarray]:
    """Drop structurally empty rows.

    Returns the pruned matrix and ``kept``, the original index of each
    surviving row (``kept == arange(nrows)`` when nothing was removed).
    """
    csr = a.to_scipy()
    kept = np.flatnonzero(np.diff(csr.indptr) > 0)
    if kept.size == a.nrows:
        return a, kept
    return SparseMatrix.from_scipy(csr[kept]), kept


@dataclass(frozen=True)
class MinNormSolveReport:
    solution: np.ndarray
    residual_inf: float
    numeric_rank: int | None
    regularization_omega: float
    solver_path: SolverPath
    backend: str = ""


def _check_system(a: SparseMatrix, b) -> np.ndarray:
    if not isinstance(a, SparseMatrix) or not a.finalized:
        raise StructuralError("A must be a finalized SparseMatrix")
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1 or b.shape[0] != a.nrows:
        raise StructuralError(f"right-hand side of shape {b.shape} does not match {a.shape}")
    if not np.all(np.isfinite(b)) or not np.all(np.isfinite(a.to_scipy().data)):
        raise DataError("non-finite entries in the linear system")
    return b


def _residual_inf(a: SparseMatrix, x: np.ndarray, b: np.ndarray) -> float:
    if b.size == 0:
        return 0.0
    return float(np.max(np.abs(spmv(a, x) - b)))


def _probe_matrix() -> sp.csr_matrix:
    # big enough to reach the blocked BLAS paths of both libraries
    rng = np.random.default_rng(12345)
    m = sp.random(220, 160, density=0.1, random_state=rng, format="csr")
    return (m + sp.eye(220, 160)).tocsr()


@functools.lru_cache(maxsize=None)
def spqr_available() -> bool:
    """True if SuiteSparseQR is importable and passes a factorization self-test."""
    if _spqr is None:
        return False
    m = _probe_matrix()
    try:
        _, r, e, _ = _spqr.rz(m.tocoo(), np.zeros((m.shape[0], 1)))
    except Exception:  # pragma: no cover - broken installation
        logger.warning("SuiteSparseQR self-test raised; using dense QR", exc_info=True)
        return False
    perm = np.arange(m.shape[1]) if e is None else np.asarray(e)
    md = m.toarray()[:, perm]
    r = sp.csr_matrix(r).toarray()
    gram = md.T @ md
    ok = np.abs(r.T @ r - gram).max() <= 1e-12 * np.abs(gram).max()
    if not ok:
        logger.warning("SuiteSparseQR self-test failed (check the BLAS it links); using dense QR")
    return bool(ok)


@functools.lru_cache(maxsize=None)
def cholmod_available() -> bool:
    """True if CHOLMOD is importable and passes a factorization self-test."""
    if _cholmod is None:
        return False
    m = _probe_matrix().T.tocsc()
    rhs = np.arange(m.shape[0], dtype=float)
    try:
        gram = (m @ m.T).tocsc()
        factor = _cholmod.analyze(gram)
        factor.cholesky_inplace(gram, beta=1.0)
        y = factor(rhs)
    except Exception:  # pragma: no cover - broken installation
        logger.warning("CHOLMOD self-test raised; using dense Cholesky", exc_info=True)
        return False
    res = (m @ (m.T @ y)) + y - rhs
    ok = np.abs(res).max() <= 1e-10 * np.abs(rhs).max()
    if not ok:
        logger.warning("CHOLMOD self-test failed (check the BLAS it links); using dense Cholesky")
    return bool(ok)


def solve_min_norm_qr(
    a: SparseMatrix, b, rank_tol: float = DEFAULT_RANK_TOL_2D, backend: str = "auto"
) -> MinNormSolveReport:
    """Minimum 2-norm solution of ``A x = b`` from a rank-revealing QR of ``A^T``.

    With ``A^T P = Q R`` the numerical rank ``r`` counts the diagonal
    entries of ``R`` above ``rank_tol * |R[0, 0]|`` (with SuiteSparseQR the
    smallest singular value of ``R[:r, :r]`` is checked against the same
    rule and dependent rows are dropped); the solution is
    ``x = Q[:, :r] z`` with ``R[:r, :r]^T z = (P^T b)[:r]``. For an
    inconsistent system this is the basic least-squares solution and the
    large residual is visible in ``residual_inf``.

    ``backend`` is ``"spqr"``, ``"dense"`` or ``"auto"`` (SuiteSparseQR if
    available).
    """
    b = _check_system(a, b)
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    auto = backend == "auto"
    if auto:
        backend = "spqr" if spqr_available() else "dense"
    m, n = a.shape
    if m == 0 or a.nnz == 0:
        x = np.zeros(n)
        return MinNormSolveReport(x, _residual_inf(a, x, b), 0, 0.0, SolverPath.RANK_REVEALING_QR, backend)
    if backend == "dense":
        x, rank = _qr_dense(a, b, rank_tol)
    elif backend == "spqr":
        if not spqr_available():
            raise SolverError("SuiteSparseQR is not installed or failed its self-test")
        x, rank = _qr_spqr(a, b, rank_tol)
        # LSQR can stall when R11 is badly conditioned; the dense QR is the backstop
        if auto and _residual_inf(a, x, b) > AUTO_RESIDUAL_TOL * (1 + np.max(np.abs(b))) and m * n <= DENSE_MAX_ENTRIES:
            logger.info("sparse QR residual too large for a %d x %d system; refactoring densely", m, n)
            backend = "dense"
            x, rank = _qr_dense(a, b, rank_tol)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return MinNormSolveReport(
        x, _residual_inf(a, x, b), rank, 0.0, SolverPath.RANK_REVEALING_QR, backend
    )


def _qr_dense(a: SparseMatrix, b: np.ndarray, rank_tol: float) -> tuple[np.ndarray, int]:
    at = a.toarray().T
    q, r, perm = scipy.linalg.qr(at, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(a.ncols), 0
    rank = int(np.count_nonzero(diag > rank_tol * diag[0]))
    z = scipy.linalg.solve_triangular(r[:rank, :rank], b[perm][:rank], trans="T")
    return q[:, :rank] @ z, rank


def _smallest_singular(tri, n: int) -> tuple[float, np.ndarray]:
    """Inverse-iteration estimate of the smallest singular value of R11 and
    its right singular vector, from the triangular factor ``tri``."""
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    sigma = np.inf
    for _ in range(INVERSE_ITERATIONS):
        w = tri.solve(tri.solve(v, trans="T"))
        nw = float(np.linalg.norm(w))
        if not np.isfinite(nw) or nw == 0.0:
            break
        sigma = 1.0 / np.sqrt(nw)
        v = w / nw
    return sigma, v


def _qr_spqr(a: SparseMatrix, b: np.ndarray, rank_tol: float) -> tuple[np.ndarray, int]:
    at_full = a.to_scipy().T.tocsc()
    # SPQR drops columns whose norm falls below an absolute threshold; the
    # first pivot of a column-pivoted QR equals the largest column norm, so
    # scaling by it gives the relative rule of the dense path.
    col_norms = np.sqrt(np.asarray(at_full.multiply(at_full).sum(axis=0)).ravel())
    tol = rank_tol * float(col_norms.max())
    # SPQR's rank detection only looks at pivot sizes and can keep a row that
    # depends on the others up to rounding (pivot just above tol, R11 nearly
    # singular). The smallest singular value of R11 is checked against the
    # same rule; a dependent row is dropped and the factorization redone.
    active = np.arange(a.nrows)
    for _ in range(MAX_DEFLATIONS + 1):
        at = at_full[:, active].tocoo()
        _, r, e, rank = _spqr.rz(at, np.zeros((at.shape[0], 1)), tolerance=tol)
        rank = int(rank)
        if rank == 0:
            return np.zeros(a.ncols), 0
        perm = np.arange(len(active)) if e is None else np.asarray(e, dtype=np.int64)
        r11 = sp.csr_matrix(r)[:rank, :rank].tocsc()
        tri = sp.linalg.splu(r11, permc_spec="NATURAL", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        sigma, v = _smallest_singular(tri, rank)
        if sigma >= rank_tol * float(np.abs(r11.diagonal()).max()):
            break
        drop = perm[int(np.argmax(np.abs(v)))]
        logger.info("dropping row %d: R11 has singular value %.2e", active[drop], sigma)
        active = np.delete(active, drop)
    live = active[perm[:rank]]
    # Q-less: only R and the column permutation are kept (the explicit Q
    # of the bindings fills in badly). With A_live = R11^T Q1^T the operator
    # R11^-T A_live is close to having orthonormal rows, so LSQR on it
    # converges quickly; started at zero it returns the minimum-norm
    # solution. Seminormal equations square the condition number and fail
    # on the 3D systems.
    a_live = a.to_scipy()[live].tocsr()
    op = sp.linalg.LinearOperator(
        (rank, a.ncols),
        matvec=lambda x: tri.solve(a_live @ x, trans="T"),
        rmatvec=lambda y: a_live.T @ tri.solve(y),
        dtype=np.float64,
    )
    rhs = tri.solve(b[live], trans="T")
    x = sp.linalg.lsqr(op, rhs, atol=0.0, btol=0.0, conlim=0.0, iter_lim=LSQR_MAX_ITER)[0]
    return np.asarray(x).ravel(), rank


LSQR_MAX_ITER = 2000
INVERSE_ITERATIONS = 4
MAX_DEFLATIONS = 8


def solve_min_norm_chol(
    a: SparseMatrix,
    b,
    omega0: float = OMEGA_BASE,
    max_doublings: int = OMEGA_MAX_DOUBLINGS,
    backend: str = "auto",
    refine_steps: int = 3,
) -> MinNormSolveReport:
    """Solve ``(A A^T + omega I) y = b`` by Cholesky and return ``x = A^T y``.

    ``omega = omega0 * 2**k`` for the smallest ``k >= 0`` for which the
    factorization succeeds; :class:`SolverError` if ``k`` would exceed
    ``max_doublings``. Up to ``refine_steps`` correction steps with the same
    factor follow, each kept only if it lowers the residual.
    """
    b = _check_system(a, b)
    if backend == "auto":
        backend = "cholmod" if cholmod_available() else "dense"
    csr = a.to_scipy()
    if a.nrows == 0:
        x = np.zeros(a.ncols)
        return MinNormSolveReport(x, 0.0, None, omega0, SolverPath.REGULARIZED_NORMAL_EQUATIONS, backend)
    if backend == "cholmod":
        if not cholmod_available():
            raise SolverError("CHOLMOD is not installed or failed its self-test")
        solve, omega = _chol_cholmod(csr, b, omega0, max_doublings)
    elif backend == "dense":
        solve, omega = _chol_dense(csr, b, omega0, max_doublings)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    x = np.asarray(csr.T @ solve(b)).ravel()
    res = _residual_inf(a, x, b)
    # iterative refinement removes most of the regularization bias
    for _ in range(refine_steps):
        x_new = x + np.asarray(csr.T @ solve(b - csr @ x)).ravel()
        res_new = _residual_inf(a, x_new, b)
        if not res_new < res:
            break
        x, res = x_new, res_new
    return MinNormSolveReport(x, res, None, omega, SolverPath.REGULARIZED_NORMAL_EQUATIONS, backend)


def _chol_cholmod(csr, b, omega0, max_doublings):
    # one Gram product and one symbolic analysis serve every omega
    gram = (csr @ csr.T).tocsc()
    factor = _cholmod.analyze(gram)
    for k in range(max_doublings + 1):
        omega = omega0 * 2.0**k
        try:
            factor.cholesky_inplace(gram, beta=omega)
        except _cholmod.CholmodNotPositiveDefiniteError:
            logger.debug("AA^T + %g I not positive definite", omega)
            continue
        return factor, omega
    raise SolverError(f"Cholesky failed for all omega up to {omega0 * 2.0**max_doublings:g}")


def _chol_dense(csr, b, omega0, max_doublings):
    gram = (csr @ csr.T).toarray()
    diag = np.arange(gram.shape[0])
    for k in range(max_doublings + 1):
        omega = omega0 * 2.0**k
        g = gram.copy()
        g[diag, diag] += omega
        try:
            c = scipy.linalg.cho_factor(g, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        return (lambda rhs: scipy.linalg.cho_solve(c, rhs, check_finite=False)), omega
    raise SolverError(f"Cholesky failed for all omega up to {omega0 * 2.0**max_doublings:g}")
