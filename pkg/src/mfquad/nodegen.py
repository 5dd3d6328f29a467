"""Node sets for quadrature: boundary nodes with normals, interior nodes.

Two strategies are available. Advancing front places boundary nodes at
spacing ``h`` from the boundary description and then grows the interior
from them; rejection sampling draws nodes in the bounding box (grid,
Halton or pseudo-random), keeps interior ones and projects those in a thin
tube onto the boundary. Everything is deterministic given the seed.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from . import geometry as geo
from .geometry import BoundaryKind, DomainModel
from .kernels import GreedyPointSet, thin

AF_MIN_SEPARATION = 0.9  # reject candidates closer than this times h
AF_BOUNDARY_CLEARANCE = 0.5  # interior nodes keep this times h from the boundary
X_RATIO = 1.6


class NodeGenError(ValueError):
    """Node generation cannot proceed on this input."""


class Generator(enum.Enum):
    ADVANCING_FRONT = "AdvancingFront"
    CARTESIAN_GRID = "CartesianGrid"
    HALTON = "Halton"
    RANDOM = "Random"


@dataclass(frozen=True)
class NodeSet:
    """Interior nodes, boundary nodes with outward normals, and metadata.

    ``interior`` holds only the nodes strictly inside. A point on a corner
    or sharp edge appears in ``boundary`` once per adjacent patch, each copy
    carrying that patch's normal. With ``closed`` the quadrature set is
    ``Y = interior + distinct boundary points`` (in that order), otherwise
    ``Y = interior``.
    """

    interior: np.ndarray
    boundary: np.ndarray
    normals: np.ndarray
    h: float
    seed: int
    closed: bool = True
    generator: Generator = Generator.ADVANCING_FRONT
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.boundary.shape[1] if self.boundary.size else self.interior.shape[1]

    @property
    def boundary_first(self) -> np.ndarray:
        """Mask of boundary entries that are the first copy of their point."""
        b = self.boundary
        if len(b) == 0:
            return np.zeros(0, dtype=bool)
        _, first = np.unique(b, axis=0, return_index=True)
        mask = np.zeros(len(b), dtype=bool)
        mask[first] = True
        return mask

    @property
    def boundary_points(self) -> np.ndarray:
        """Distinct boundary points in their original order."""
        return self.boundary[self.boundary_first]

    @property
    def Y(self) -> np.ndarray:
        return np.vstack([self.interior, self.boundary_points]) if self.closed else self.interior

    @property
    def Z(self) -> np.ndarray:
        return self.boundary

    @property
    def n_y(self) -> int:
        return len(self.interior) + (int(self.boundary_first.sum()) if self.closed else 0)

    @property
    def n_z(self) -> int:
        return len(self.boundary)

    def packing_spacing(self, volume: float | None) -> float | None:
        """``(|Omega| / N_Y)^(1/d)``, the step of a grid with as many nodes."""
        if volume is None or self.n_y == 0:
            return None
        return (volume / self.n_y) ** (1.0 / self.dim)


# --- Halton ---------------------------------------------------------------

_PRIMES = (2, 3, 5)


def _radical_inverse(idx: np.ndarray, base: int) -> np.ndarray:
    out = np.zeros(idx.shape, dtype=float)
    f = 1.0 / base
    i = idx.copy()
    while np.any(i > 0):
        out += f * (i % base)
        i //= base
        f /= base
    return out


def halton(seed: int, n: int, dim: int, box=None) -> np.ndarray:
    """Halton points with indices ``seed + 1, ..., seed + n`` mapped into ``box``.

    ``seed`` is the start offset into the sequence; index 0 (the origin) is
    never used.
    """
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    idx = np.arange(seed + 1, seed + 1 + n, dtype=np.int64)
    u = np.stack([_radical_inverse(idx, b) for b in _PRIMES[:dim]], axis=1) if n else np.zeros((0, dim))
    if box is None:
        return u
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    return lo + u * (hi - lo)


# --- nearest neighbours ---------------------------------------------------


class NeighborIndex:
    """k-nearest-neighbour queries ordered by (distance, index)."""

    def __init__(self, points):
        self.points = np.ascontiguousarray(points, dtype=float)
        if self.points.ndim != 2:
            raise ValueError("points must be a 2D array")
        self._tree = cKDTree(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def query(self, p, k: int) -> np.ndarray:
        """Indices of the k nearest points to each row of ``p``.

        Returns shape ``(k,)`` for a single point, ``(m, k)`` for ``m``
        points. Ties in distance are broken by the smaller index.
        """
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        n = len(self.points)
        if k > n:
            raise ValueError(f"k={k} exceeds the index size {n}")
        if k <= 0:
            out = np.zeros((len(p), 0), dtype=np.int64)
            return out[0] if single else out
        extra = min(n, k + 8)
        out = np.empty((len(p), k), dtype=np.int64)
        todo = np.arange(len(p))
        while todo.size:
            _, cand = self._tree.query(p[todo], k=extra)
            cand = np.asarray(cand, dtype=np.int64).reshape(len(todo), extra)
            diff = self.points[cand] - p[todo][:, None, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            order = np.lexsort((cand, d2), axis=1)
            d2s = np.take_along_axis(d2, order, axis=1)
            cs = np.take_along_axis(cand, order, axis=1)
            # a tie straddling the cut could hide a smaller index further out
            unsure = (d2s[:, k - 1] == d2s[:, -1]) & (extra < n)
            out[todo[~unsure]] = cs[~unsure, :k]
            todo = todo[unsure]
            extra = min(n, 2 * extra)
        return out[0] if single else out


def knn(index: NeighborIndex, p, k: int) -> np.ndarray:
    return index.query(p, k)


# --- boundary nodes -------------------------------------------------------


def _invert_arclength(patch: geo.CurvePatch, targets: np.ndarray) -> np.ndarray:
    """Parameters at which the arc length from ``t0`` equals ``targets``."""
    panels = 256
    gx, gw = np.polynomial.legendre.leggauss(12)
    edges = np.linspace(patch.t0, patch.t1, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    seg = (patch.area_element(nodes).reshape(panels, -1) * gw).sum(axis=1) * half
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.interp(targets, cum, edges)

    def arclen(tt):
        j = np.clip(np.searchsorted(edges, tt, side="right") - 1, 0, panels - 1)
        a = edges[j]
        hh = 0.5 * (tt - a)
        pts = (a + hh)[:, None] + hh[:, None] * gx[None, :]
        vals = patch.area_element(pts.ravel()).reshape(len(tt), -1)
        return cum[j] + (vals * gw).sum(axis=1) * hh

    for _ in range(30):
        step = (arclen(t) - targets) / patch.area_element(t)
        t = np.clip(t - step, patch.t0, patch.t1)
        if np.max(np.abs(step), initial=0.0) < 1e-15 * (1 + abs(patch.t1)):
            break
    return t


def _curve_boundary(d: DomainModel, h: float, rng: np.random.Generator):
    pts, nrm = [], []
    patches = d.patches
    for i, patch in enumerate(patches):
        length = patch.length()
        n = max(1, int(round(length / h)))
        if patch.closed:
            phase = rng.random()
            s = (np.arange(n) + phase) * (length / n)
            t = _invert_arclength(patch, s)
            pts.append(patch.point(t))
            nrm.append(patch.normal(t))
            continue
        s = np.arange(1, n) * (length / n)
        t = _invert_arclength(patch, s)
        # the start point is a corner shared with the previous patch
        prev = patches[i - 1]
        if prev.closed:
            raise NodeGenError("open and closed patches cannot be mixed")
        corner = patch.point(patch.t0)
        if np.linalg.norm(prev.point(prev.t1) - corner) > 1e-12:
            raise NodeGenError(f"patch chain of {d.name} is not closed at {corner[0]}")
        # one copy per side, so each patch keeps its own normal there
        pts.append(np.vstack([corner, corner, patch.point(t)]))
        nrm.append(np.vstack([prev.normal(prev.t1), patch.normal(patch.t0), patch.normal(t)]))
    return np.vstack(pts), np.vstack(nrm)


def _tangent_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangent vectors for each unit normal row."""
    a = np.zeros_like(n)
    use_x = np.abs(n[:, 0]) < 0.9
    a[use_x, 0] = 1.0
    a[~use_x, 1] = 1.0
    t1 = np.cross(n, a)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(n, t1)
    return t1, t2


def _surface_front(d: DomainModel, h: float, rng: np.random.Generator, start: np.ndarray) -> np.ndarray:
    """March a front over the zero set of phi, starting from ``start``."""
    box = d.implicit.tight_box
    grid = GreedyPointSet(np.stack([box[0] - h, box[1] + h]), AF_MIN_SEPARATION * h, 3)
    front = start[grid.offer(start)]
    angles = np.arange(6) * (np.pi / 3)
    while len(front):
        g = d.grad_phi(front)
        n = g / np.linalg.norm(g, axis=1)[:, None]
        t1, t2 = _tangent_basis(n)
        rot = rng.random(len(front)) * (np.pi / 3)
        a = rot[:, None] + angles[None, :]
        dirs = np.cos(a)[:, :, None] * t1[:, None, :] + np.sin(a)[:, :, None] * t2[:, None, :]
        cand = (front[:, None, :] + h * dirs).reshape(-1, 3)
        cand, ok = geo.project_many(d, cand)
        cand = cand[ok]
        front = cand[grid.offer(cand)]
    return grid.points


def _smooth_surface_boundary(d: DomainModel, h: float, rng: np.random.Generator):
    patch = d.patches[0]
    u0, u1, v0, v1 = patch.rect
    uv = rng.random(2)
    start = patch.point(u0 + uv[0] * (u1 - u0), v0 + uv[1] * (v1 - v0))
    start, ok = geo.project_many(d, start)
    pts = _surface_front(d, h, rng, start[ok])
    g = d.grad_phi(pts)
    return pts, g / np.linalg.norm(g, axis=1)[:, None]


def _polygon_sdf(poly: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Signed distance to a simple polygon, negative inside."""
    dmin = np.full(len(p), np.inf)
    inside = np.zeros(len(p), dtype=bool)
    k = len(poly)
    for i in range(k):
        a, b = poly[i], poly[(i + 1) % k]
        ab = b - a
        t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
        dmin = np.minimum(dmin, np.linalg.norm(p - (a + t[:, None] * ab), axis=1))
        cross = ((a[1] > p[:, 1]) != (b[1] > p[:, 1])) & (
            p[:, 0] < (b[0] - a[0]) * (p[:, 1] - a[1]) / (b[1] - a[1] + 1e-300) + a[0]
        )
        inside ^= cross
    return np.where(inside, -dmin, dmin)


def _polyhedral_boundary(d: DomainModel, h: float, rng: np.random.Generator):
    tol = 1e-12
    corners = np.asarray(d.corners, dtype=float)
    feat = [corners]
    for a, b in d.edges:
        length = float(np.linalg.norm(b - a))
        n = max(1, int(round(length / h)))
        s = np.arange(1, n) / n
        feat.append(a + s[:, None] * (b - a))
    feat = np.vstack(feat)
    faces = d.faces

    def faces_containing(p):
        hits = []
        for f in faces:
            on_plane = np.abs((p - f.origin) @ f.normal) <= tol
            in_poly = _polygon_sdf(f.polygon, f.to_local(p)) <= tol
            hits.append(on_plane & in_poly)
        return np.array(hits)  # (n_faces, n_points)

    member = faces_containing(feat)
    fn = np.array([f.normal for f in faces])
    # a feature point is repeated for every face holding it, with that face's normal
    fi, pi = np.nonzero(member)
    order = np.lexsort((fi, pi))
    pts, nrm = [feat[pi[order]]], [fn[fi[order]]]
    angles = np.arange(6) * (np.pi / 3)
    for fi, f in enumerate(faces):
        seeds = f.to_local(feat[member[fi]])
        lo, hi = f.polygon.min(axis=0), f.polygon.max(axis=0)
        grid = GreedyPointSet(np.stack([lo - h, hi + h]), AF_MIN_SEPARATION * h, 2)
        grid.offer(seeds)
        front = seeds
        new = []
        while len(front):
            rot = rng.random(len(front)) * (np.pi / 3)
            a = rot[:, None] + angles[None, :]
            cand = (front[:, None, :] + h * np.stack([np.cos(a), np.sin(a)], axis=2)).reshape(-1, 2)
            cand = cand[_polygon_sdf(f.polygon, cand) < -AF_BOUNDARY_CLEARANCE * h]
            front = cand[grid.offer(cand)]
            new.append(front)
        new = np.vstack(new) if new else np.zeros((0, 2))
        pts.append(f.to_world(new))
        nrm.append(np.broadcast_to(f.normal, (len(new), 3)))
    return np.vstack(pts), np.vstack(nrm)


def _implicit_boundary(d: DomainModel, h: float, seed: int):
    """Halton rejection sampling in a tube, projection and thinning."""
    box = d.bounding_box
    vol = float(np.prod(box[1] - box[0]))
    n_h = int(round(vol * h ** -d.dim))
    pts = halton(seed * n_h, n_h, d.dim, box)
    tube = d.implicit.boundary_distance(pts) < h
    proj, ok = geo.project_many(d, pts[tube])
    proj = proj[ok]
    keep = thin(proj, h)
    z = proj[keep]
    g = d.grad_phi(z)
    return z, g / np.linalg.norm(g, axis=1)[:, None]


def boundary_nodes(d: DomainModel, h: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Boundary nodes at spacing about ``h`` with unit outward normals."""
    rng = np.random.default_rng([seed, 0])
    kind = d.boundary_kind
    if kind is BoundaryKind.CURVES:
        return _curve_boundary(d, h, rng)
    if kind is BoundaryKind.SMOOTH_SURFACE:
        return _smooth_surface_boundary(d, h, rng)
    if kind is BoundaryKind.POLYHEDRAL:
        return _polyhedral_boundary(d, h, rng)
    return _implicit_boundary(d, h, seed)


# --- interior -------------------------------------------------------------


def _icosahedron() -> np.ndarray:
    g = (1 + 5**0.5) / 2
    v = []
    for a in (-1, 1):
        for b in (-g, g):
            v += [(0, a, b), (a, b, 0), (b, 0, a)]
    v = np.array(v, dtype=float)
    return v / np.linalg.norm(v, axis=1)[:, None]


_ICO = _icosahedron()


def _front_directions(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Per-node rotated direction sets, shape (n, k, dim)."""
    if dim == 2:
        a = rng.random(n)[:, None] * (np.pi / 3) + np.arange(6)[None, :] * (np.pi / 3)
        return np.stack([np.cos(a), np.sin(a)], axis=2)
    rot = Rotation.random(n, random_state=rng).as_matrix()
    return np.einsum("nij,kj->nki", rot, _ICO)


def fill_interior(d: DomainModel, h: float, boundary: np.ndarray, seed: int) -> np.ndarray:
    """Advance a front from the boundary nodes into the domain."""
    rng = np.random.default_rng([seed, 1])
    box = d.implicit.tight_box
    grid = GreedyPointSet(np.stack([box[0] - h, box[1] + h]), AF_MIN_SEPARATION * h, d.dim)
    grid.offer(boundary)
    front = boundary
    out = []
    while len(front):
        dirs = _front_directions(rng, len(front), d.dim)
        cand = (front[:, None, :] + h * dirs).reshape(-1, d.dim)
        phi = d.phi(cand)
        cand = cand[phi < 0]
        cand = cand[d.implicit.boundary_distance(cand) > AF_BOUNDARY_CLEARANCE * h]
        front = cand[grid.offer(cand)]
        out.append(front)
    return np.vstack(out) if out else np.zeros((0, d.dim))


def advancing_front(d: DomainModel, h: float, seed: int, closed: bool = True) -> NodeSet:
    """Boundary nodes from the patches (or projection), interior by front growth."""
    if h <= 0:
        raise ValueError("h must be positive")
    z, nrm = boundary_nodes(d, h, seed)
    y = fill_interior(d, h, z, seed)
    meta = {"domain": d.name}
    if len(z) <= d.dim:
        meta["degenerate"] = True
    return NodeSet(y, z, nrm, float(h), int(seed), closed, Generator.ADVANCING_FRONT, meta)


class SampleMode(enum.Enum):
    GRID = "Grid"
    HALTON = "Halton"
    RANDOM = "Random"


_MODE_TAG = {
    SampleMode.GRID: Generator.CARTESIAN_GRID,
    SampleMode.HALTON: Generator.HALTON,
    SampleMode.RANDOM: Generator.RANDOM,
}


def rejection_sample(
    d: DomainModel, h: float, mode: SampleMode | str = SampleMode.HALTON, seed: int = 1, closed: bool = True
) -> NodeSet:
    """Sample the bounding box, keep interior nodes, project the tube onto the boundary.

    About ``round(|H| h^-d)`` samples are drawn in the bounding box ``H``.
    Samples with ``phi < 0`` farther than ``h`` from the boundary are
    interior nodes; those within ``h`` of it are projected onto the zero set
    and thinned so no two boundary nodes are closer than ``h``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if d.implicit.grad_phi is None:
        raise NodeGenError(f"{d.name} has no gradient information")
    mode = SampleMode(mode) if not isinstance(mode, SampleMode) else mode
    box = d.bounding_box
    lo, hi = box
    vol = float(np.prod(hi - lo))
    n_h = int(round(vol * h ** -d.dim))
    rng = np.random.default_rng([seed, 2])
    if mode is SampleMode.GRID:
        shift = rng.random(d.dim) * h
        axes = [np.arange(lo[k] + shift[k], hi[k], h) for k in range(d.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel(order="F") for m in mesh], axis=1)
    elif mode is SampleMode.HALTON:
        pts = halton(seed * n_h, n_h, d.dim, box)
    else:
        pts = lo + rng.random((n_h, d.dim)) * (hi - lo)
    phi = d.phi(pts)
    dist = d.implicit.boundary_distance(pts)
    interior = pts[(phi < 0) & (dist > h)]
    proj, ok = geo.project_many(d, pts[dist < h])
    proj = proj[ok]
    z = proj[thin(proj, h)]
    g = d.grad_phi(z)
    nrm = g / np.linalg.norm(g, axis=1)[:, None] if len(z) else np.zeros((0, d.dim))
    meta = {"domain": d.name, "mode": mode.value}
    if len(z) <= d.dim:
        meta["degenerate"] = True
    return NodeSet(interior, z, nrm, float(h), int(seed), closed, _MODE_TAG[mode], meta)


def make_X(d: DomainModel, h: float, seed: int, ratio: float = X_RATIO) -> NodeSet:
    """Closed discretization node set at spacing ``ratio * h``."""
    # an independent stream so X is not a coarsened copy of Y
    sub = int(np.random.SeedSequence([seed, 3]).generate_state(1)[0])
    ns = advancing_front(d, ratio * h, sub, closed=True)
    return NodeSet(ns.interior, ns.boundary, ns.normals, ns.h, ns.seed, True, ns.generator,
                   {**ns.meta, "base_h": float(h), "ratio": float(ratio)})


# --- CSV ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_nodes(ns: NodeSet, path_or_buf) -> None:
    """Write a node CSV: metadata comment, header, then one row per node."""
    dim = ns.dim
    coords = ["x", "y", "z"][:dim]
    normals = ["nx", "ny", "nz"][:dim]
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        fh.write(
            f"# dim={dim} h={_fmt(ns.h)} seed={ns.seed} closed={int(ns.closed)} "
            f"generator={ns.generator.value}\n"
        )
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(coords + ["kind"] + normals)
        for p in ns.interior:
            w.writerow([_fmt(v) for v in p] + ["interior"] + [""] * dim)
        for p, n in zip(ns.boundary, ns.normals):
            w.writerow([_fmt(v) for v in p] + ["boundary"] + [_fmt(v) for v in n])
    finally:
        if own:
            fh.close()


def read_nodes(path_or_buf) -> NodeSet:
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
    dim = header.index("kind")
    inner, bnd, nrm = [], [], []
    for row in reader:
        if not row:
            continue
        p = [float(v) for v in row[:dim]]
        if row[dim] == "interior":
            inner.append(p)
        elif row[dim] == "boundary":
            bnd.append(p)
            nrm.append([float(v) for v in row[dim + 1 : 2 * dim + 1]])
        else:
            raise ValueError(f"unknown node kind {row[dim]!r}")
    return NodeSet(
        np.array(inner, dtype=float).reshape(-1, dim),
        np.array(bnd, dtype=float).reshape(-1, dim),
        np.array(nrm, dtype=float).reshape(-1, dim),
        float(meta.get("h", "nan")),
        int(meta.get("seed", 0)),
        bool(int(meta.get("closed", 1))),
        Generator(meta.get("generator", Generator.ADVANCING_FRONT.value)),
    )
