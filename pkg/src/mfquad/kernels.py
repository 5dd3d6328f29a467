"""Hot loops, each with a numba implementation and a pure-numpy twin.

The public wrappers dispatch on :func:`mfquad._accel.numba_enabled`; both
paths return identical results (checked in the test suite), so the flag
only changes speed.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ._accel import njit, numba_enabled

# --- greedy minimum-distance acceptance ------------------------------------


@njit
def _grid_cell(p, lo, inv_cell, dims):
    idx = 0
    stride = 1
    for k in range(p.shape[0]):
        c = int((p[k] - lo[k]) * inv_cell)
        if c < 0:
            c = 0
        elif c >= dims[k]:
            c = dims[k] - 1
        idx += c * stride
        stride *= dims[k]
    return idx


@njit
def _greedy_accept_nb(pts, count, head, nxt, lo, inv_cell, dims, cand, r2):
    d = cand.shape[1]
    out = np.zeros(cand.shape[0], dtype=np.bool_)
    cell = np.empty(d, dtype=np.int64)
    for i in range(cand.shape[0]):
        p = cand[i]
        for k in range(d):
            c = int((p[k] - lo[k]) * inv_cell)
            cell[k] = min(max(c, 0), dims[k] - 1)
        ok = True
        # scan the 3^d block of cells around p
        nblock = 3**d
        for b in range(nblock):
            rem = b
            flat = 0
            stride = 1
            inside = True
            for k in range(d):
                off = rem % 3 - 1
                rem //= 3
                c = cell[k] + off
                if c < 0 or c >= dims[k]:
                    inside = False
                    break
                flat += c * stride
                stride *= dims[k]
            if not inside:
                continue
            j = head[flat]
            while j >= 0:
                s = 0.0
                for k in range(d):
                    t = pts[j, k] - p[k]
                    s += t * t
                if s < r2:
                    ok = False
                    break
                j = nxt[j]
            if not ok:
                break
        if ok:
            out[i] = True
            for k in range(d):
                pts[count, k] = p[k]
            flat = _grid_cell(p, lo, inv_cell, dims)
            nxt[count] = head[flat]
            head[flat] = count
            count += 1
    return out, count


def _greedy_accept_np(existing: np.ndarray, cand: np.ndarray, r: float) -> np.ndarray:
    """Same rule as the numba kernel: accept in order, reject if closer than r."""
    r2 = r * r
    n = len(cand)
    ok = np.ones(n, dtype=bool)
    if n == 0:
        return ok
    if len(existing):
        tree = cKDTree(existing)
        # slightly inflated radius, exact comparison below
        hits = tree.query_ball_point(cand, r * (1 + 1e-9))
        for i, h in enumerate(hits):
            if h:
                diff = existing[h] - cand[i]
                if np.any(np.einsum("ij,ij->i", diff, diff) < r2):
                    ok[i] = False
    keep = np.flatnonzero(ok)
    if keep.size > 1:
        sub = cand[keep]
        pairs = cKDTree(sub).query_pairs(r * (1 + 1e-9), output_type="ndarray")
        if len(pairs):
            diff = sub[pairs[:, 0]] - sub[pairs[:, 1]]
            close = np.einsum("ij,ij->i", diff, diff) < r2
            pairs = pairs[close]
            pairs.sort(axis=1)
            later = [[] for _ in range(keep.size)]
            for a, b in pairs:
                later[b].append(a)
            alive = np.ones(keep.size, dtype=bool)
            for b in range(keep.size):
                for a in later[b]:
                    if alive[a]:
                        alive[b] = False
                        break
            ok[keep[~alive]] = False
    return ok


class GreedyPointSet:
    """Point set grown by greedy acceptance with a minimum separation ``r``.

    Candidates are tested in order against all points accepted so far
    (including earlier candidates of the same batch). ``box`` bounds every
    point ever added; the numba path uses it for a uniform hash grid.
    """

    def __init__(self, box: np.ndarray, r: float, dim: int, capacity: int | None = None):
        self.r = float(r)
        self.dim = dim
        lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
        self.lo = lo - self.r
        span = hi - lo + 2 * self.r
        self.inv_cell = 1.0 / self.r
        self.dims = np.maximum(1, np.ceil(span * self.inv_cell).astype(np.int64))
        if capacity is None:
            # each point owns a disjoint ball of radius r/2
            ball = np.pi * (self.r / 2) ** 2 if dim == 2 else 4 / 3 * np.pi * (self.r / 2) ** 3
            capacity = int(np.prod(span + self.r) / ball) + 16
        self.pts = np.zeros((capacity, dim))
        self.count = 0
        self.use_numba = numba_enabled()
        if self.use_numba:
            self.head = np.full(int(np.prod(self.dims)), -1, dtype=np.int64)
            self.nxt = np.full(capacity, -1, dtype=np.int64)

    def _grow(self, extra: int) -> None:
        need = self.count + extra
        if need <= len(self.pts):
            return
        cap = max(need, 2 * len(self.pts))
        pts = np.zeros((cap, self.dim))
        pts[: self.count] = self.pts[: self.count]
        self.pts = pts
        if self.use_numba:
            nxt = np.full(cap, -1, dtype=np.int64)
            nxt[: self.count] = self.nxt[: self.count]
            self.nxt = nxt

    def offer(self, cand: np.ndarray) -> np.ndarray:
        """Accept a batch of candidates; returns the acceptance mask."""
        cand = np.ascontiguousarray(cand, dtype=np.float64).reshape(-1, self.dim)
        self._grow(len(cand))
        if self.use_numba:
            mask, self.count = _greedy_accept_nb(
                self.pts, self.count, self.head, self.nxt, self.lo, self.inv_cell,
                self.dims, cand, self.r * self.r,
            )
            return mask
        mask = _greedy_accept_np(self.pts[: self.count], cand, self.r)
        acc = cand[mask]
        self.pts[self.count : self.count + len(acc)] = acc
        self.count += len(acc)
        return mask

    @property
    def points(self) -> np.ndarray:
        return self.pts[: self.count].copy()


def thin(points: np.ndarray, r: float) -> np.ndarray:
    """Indices kept by greedy thinning (earlier point wins) at separation ``r``."""
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64)
    box = np.stack([points.min(axis=0), points.max(axis=0)])
    gs = GreedyPointSet(box, r, points.shape[1], capacity=len(points) + 1)
    return np.flatnonzero(gs.offer(points))


# --- Cox-de Boor ----------------------------------------------------------


@njit
def _bspline_basis_nb(knots, q, t):
    """Nonzero B-splines of order q (and first derivatives) at each t.

    Returns the index of the first nonzero function and two (m, q) arrays.
    """
    p = q - 1
    nb = knots.shape[0] - q
    m = t.shape[0]
    first = np.empty(m, dtype=np.int64)
    vals = np.zeros((m, q))
    ders = np.zeros((m, q))
    left = np.empty(q)
    right = np.empty(q)
    ndu = np.empty((q, q))
    for i in range(m):
        x = t[i]
        # span mu with knots[mu] <= x < knots[mu + 1], clamped to the last one
        lo = p
        hi = nb
        if x >= knots[nb]:
            mu = nb - 1
        else:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if knots[mid] <= x:
                    lo = mid
                else:
                    hi = mid
            mu = lo
        first[i] = mu - p
        ndu[0, 0] = 1.0
        for j in range(1, q):
            left[j] = x - knots[mu + 1 - j]
            right[j] = knots[mu + j] - x
            saved = 0.0
            for r in range(j):
                ndu[j, r] = right[r + 1] + left[j - r]
                tmp = ndu[r, j - 1] / ndu[j, r]
                ndu[r, j] = saved + right[r + 1] * tmp
                saved = left[j - r] * tmp
            ndu[j, j] = saved
        for j in range(q):
            vals[i, j] = ndu[j, p]
        if p == 0:
            continue
        # first derivative from the order q-1 functions
        for j in range(q):
            d = 0.0
            if j >= 1:
                d += ndu[j - 1, p - 1] / ndu[p, j - 1]
            if j <= p - 1:
                d -= ndu[j, p - 1] / ndu[p, j]
            ders[i, j] = p * d
    return first, vals, ders


def _bspline_basis_np(knots: np.ndarray, q: int, t: np.ndarray):
    p = q - 1
    nb = len(knots) - q
    t = np.asarray(t, dtype=float)
    m = len(t)
    mu = np.searchsorted(knots, t, side="right") - 1
    mu = np.clip(mu, p, nb - 1)
    first = mu - p
    # ndu[:, j] holds the order-(j+1) values, ndu knot differences below the diagonal
    ndu = np.zeros((m, q, q))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((m, q))
    right = np.zeros((m, q))
    for j in range(1, q):
        left[:, j] = t - knots[mu + 1 - j]
        right[:, j] = knots[mu + j] - t
        saved = np.zeros(m)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            tmp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * tmp
            saved = left[:, j - r] * tmp
        ndu[:, j, j] = saved
    vals = ndu[:, :, p].copy()
    ders = np.zeros((m, q))
    if p > 0:
        for j in range(q):
            d = np.zeros(m)
            if j >= 1:
                d += ndu[:, j - 1, p - 1] / ndu[:, p, j - 1]
            if j <= p - 1:
                d -= ndu[:, j, p - 1] / ndu[:, p, j]
            ders[:, j] = p * d
    return first.astype(np.int64), vals, ders


def bspline_basis(knots: np.ndarray, q: int, t: np.ndarray):
    """First nonzero index, values and derivatives of the q active B-splines."""
    knots = np.ascontiguousarray(knots, dtype=np.float64)
    t = np.ascontiguousarray(np.atleast_1d(t), dtype=np.float64)
    if numba_enabled():
        return _bspline_basis_nb(knots, q, t)
    return _bspline_basis_np(knots, q, t)
