"""Integration domains: level sets, parametric boundary patches, test domains.

Every domain is described by a level-set function that is negative inside.
Domains whose boundary pieces have closed-form parametrizations also carry
a list of patches; those drive boundary node placement and the reference
integrals of the harness. Points on sharp features (corners of the disk
sector, edges of the L-shaped prism) are tagged so that normal queries there
are routed to patch data instead of an ill-defined gradient.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

Array = np.ndarray

FEATURE_TOL = 1e-9
BOX_PADDING = 0.1


class GeometryError(ValueError):
    """A geometric query is not defined at the given point."""


@dataclass(frozen=True)
class ImplicitDomain:
    """Level set ``phi < 0`` inside, with gradient and a bounding box.

    ``phi`` and ``grad_phi`` act on arrays of shape ``(n, dim)``.
    ``tight_box`` touches the closure; ``bounding_box`` pads it by
    ``BOX_PADDING`` of the side length on every side.
    """

    dim: int
    phi: Callable[[Array], Array]
    grad_phi: Callable[[Array], Array]
    tight_box: Array  # (2, dim): lower corner, upper corner

    @property
    def bounding_box(self) -> Array:
        lo, hi = self.tight_box
        pad = BOX_PADDING * (hi - lo)
        return np.stack([lo - pad, hi + pad])

    def boundary_distance(self, p: Array) -> Array:
        """First-order distance estimate ``|phi| / |grad phi|``."""
        p = np.atleast_2d(p)
        g = np.linalg.norm(self.grad_phi(p), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = np.abs(self.phi(p)) / g
        return np.where(g > 0, dist, np.inf)


class CurvePatch:
    """Smooth boundary piece of a 2D domain, ``t -> point(t)`` on [t0, t1].

    The parametrization runs counterclockwise around the domain, so the
    outward normal is the tangent rotated clockwise.
    """

    dim = 2

    def __init__(self, point, tangent, t0: float, t1: float, closed: bool = False):
        self._point = point
        self._tangent = tangent
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.closed = closed

    def point(self, t) -> Array:
        return self._point(np.atleast_1d(np.asarray(t, dtype=float)))

    def tangent(self, t) -> Array:
        return self._tangent(np.atleast_1d(np.asarray(t, dtype=float)))

    def area_element(self, t) -> Array:
        return np.linalg.norm(self.tangent(t), axis=1)

    def normal(self, t) -> Array:
        tg = self.tangent(t)
        n = np.stack([tg[:, 1], -tg[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1)[:, None]

    def weighted_normal(self, t) -> Array:
        """``normal * area_element``, well defined where the latter vanishes."""
        tg = self.tangent(t)
        return np.stack([tg[:, 1], -tg[:, 0]], axis=1)

    def length(self) -> float:
        val, _ = integrate.quad(
            lambda s: float(self.area_element(s)[0]), self.t0, self.t1,
            epsabs=1e-14, epsrel=1e-13, limit=500,
        )
        return val


class SurfacePatch:
    """Smooth boundary piece of a 3D domain on the rectangle [u0,u1] x [v0,v1].

    ``orientation`` is +1 when ``t_u x t_v`` points outward, -1 otherwise.
    ``normal`` may be given explicitly for parametrizations with degenerate
    points such as the poles of a sphere.
    """

    dim = 3

    def __init__(self, point, tangents, rect, orientation: int = 1, normal=None):
        self._point = point
        self._tangents = tangents
        self.rect = tuple(float(r) for r in rect)
        self.orientation = orientation
        self._normal = normal

    def point(self, u, v) -> Array:
        u, v = np.broadcast_arrays(np.atleast_1d(np.asarray(u, float)), np.asarray(v, float))
        return self._point(u.ravel(), v.ravel())

    def weighted_normal(self, u, v) -> Array:
        u, v = np.broadcast_arrays(np.atleast_1d(np.asarray(u, float)), np.asarray(v, float))
        tu, tv = self._tangents(u.ravel(), v.ravel())
        return self.orientation * np.cross(tu, tv)

    def area_element(self, u, v) -> Array:
        return np.linalg.norm(self.weighted_normal(u, v), axis=1)

    def normal(self, u, v) -> Array:
        if self._normal is not None:
            u, v = np.broadcast_arrays(np.atleast_1d(np.asarray(u, float)), np.asarray(v, float))
            return self._normal(u.ravel(), v.ravel())
        n = self.weighted_normal(u, v)
        return n / np.linalg.norm(n, axis=1)[:, None]


@dataclass(frozen=True)
class PlanarFace:
    """Flat boundary face: polygon (local 2D coordinates) in a plane.

    A point with local coordinates (s, t) sits at ``origin + s*e1 + t*e2``;
    ``normal`` is the outward unit normal.
    """

    origin: Array
    e1: Array
    e2: Array
    normal: Array
    polygon: Array  # (k, 2), counterclockwise in (s, t)

    def to_world(self, st: Array) -> Array:
        st = np.atleast_2d(st)
        return self.origin + st[:, :1] * self.e1 + st[:, 1:2] * self.e2

    def to_local(self, p: Array) -> Array:
        d = np.atleast_2d(p) - self.origin
        return np.stack([d @ self.e1, d @ self.e2], axis=1)


class BoundaryKind(enum.Enum):
    CURVES = "curves"
    SMOOTH_SURFACE = "smooth-surface"
    POLYHEDRAL = "polyhedral"
    IMPLICIT = "implicit"


@dataclass(frozen=True)
class DomainModel:
    name: str
    implicit: ImplicitDomain
    patches: tuple = ()
    measure_interior: float | None = None
    measure_boundary: float | None = None
    interior_witness: Array = None
    x0: Array = None
    clearance: float = 0.1
    boundary_kind: BoundaryKind = BoundaryKind.IMPLICIT
    corners: Array = None  # (k, dim) sharp points
    edges: tuple = ()  # ((a, b), ...) sharp straight segments in 3D
    faces: tuple = ()  # PlanarFace list for polyhedral boundaries
    runge_center: Array = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.implicit.dim

    def phi(self, p) -> Array:
        return self.implicit.phi(np.atleast_2d(np.asarray(p, dtype=float)))

    def grad_phi(self, p) -> Array:
        return self.implicit.grad_phi(np.atleast_2d(np.asarray(p, dtype=float)))

    @property
    def bounding_box(self) -> Array:
        return self.implicit.bounding_box

    def on_feature(self, p, tol: float = FEATURE_TOL) -> Array:
        """Mask of points lying on a tagged corner or edge."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        hit = np.zeros(len(p), dtype=bool)
        if self.corners is not None and len(self.corners):
            d = np.linalg.norm(p[:, None, :] - self.corners[None, :, :], axis=2)
            hit |= (d <= tol).any(axis=1)
        for a, b in self.edges:
            hit |= _segment_distance(p, a, b) <= tol
        return hit


def _segment_distance(p: Array, a: Array, b: Array) -> Array:
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def inside(d: DomainModel, p) -> Array | bool:
    """``phi(p) < 0``; scalar in, scalar out."""
    p = np.asarray(p, dtype=float)
    res = d.phi(p) < 0
    return bool(res[0]) if p.ndim == 1 else res


def project_to_boundary(d: DomainModel, p, h: float | None = None, max_iter: int = 50):
    """Move ``p`` onto the zero set of phi along the gradient direction.

    Damped Newton: ``p <- p - s * phi/|grad|^2 * grad`` with ``s`` halved
    until ``|phi|`` decreases. Returns None without convergence or at a
    vanishing gradient. ``h`` is accepted for symmetry with the tube check
    done by callers and bounds the total displacement to ``2h`` when given.
    """
    p = np.asarray(p, dtype=float).copy()
    start = p.copy()
    tol = 1e-12 * (1.0 + np.linalg.norm(p))
    f = float(d.phi(p)[0])
    for _ in range(max_iter):
        if abs(f) <= tol:
            if h is not None and np.linalg.norm(p - start) > 2.0 * h:
                return None
            return p
        g = d.grad_phi(p)[0]
        gg = float(g @ g)
        if gg == 0.0 or not np.isfinite(gg):
            return None
        step = f / gg * g
        s = 1.0
        for _ in range(30):
            cand = p - s * step
            fc = float(d.phi(cand)[0])
            if abs(fc) < abs(f):
                break
            s *= 0.5
        else:
            return None
        p, f = cand, fc
    return p if abs(f) <= tol else None


def project_many(d: DomainModel, pts: Array, max_iter: int = 50) -> tuple[Array, Array]:
    """Vectorized :func:`project_to_boundary`; returns (points, converged mask)."""
    p = np.array(pts, dtype=float, copy=True)
    tol = 1e-12 * (1.0 + np.linalg.norm(p, axis=1))
    f = d.phi(p)
    active = np.abs(f) > tol
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        g = d.grad_phi(p[idx])
        gg = np.einsum("ij,ij->i", g, g)
        ok = gg > 0
        idx, g, gg = idx[ok], g[ok], gg[ok]
        step = (f[idx] / gg)[:, None] * g
        s = np.ones(len(idx))
        fi = np.abs(f[idx])
        cand = p[idx] - step
        fc = d.phi(cand)
        bad = np.abs(fc) >= fi
        for _ in range(30):
            if not bad.any():
                break
            s[bad] *= 0.5
            cand[bad] = p[idx[bad]] - s[bad, None] * step[bad]
            fc[bad] = d.phi(cand[bad])
            bad = np.abs(fc) >= fi
        good = ~bad
        p[idx[good]] = cand[good]
        f[idx[good]] = fc[good]
        active[:] = False
        active[idx[good]] = np.abs(fc[good]) > tol[idx[good]]
    conv = np.abs(f) <= tol
    return p, conv


def boundary_normal(d: DomainModel, p, patch_normal=None) -> Array:
    """Unit outward normal at a boundary point.

    ``patch_normal`` (from the patch that produced ``p``) takes precedence.
    Otherwise the normalized gradient is returned; on a tagged corner or
    edge that is ambiguous and :class:`GeometryError` is raised.
    """
    if patch_normal is not None:
        n = np.asarray(patch_normal, dtype=float)
        return n / np.linalg.norm(n)
    p = np.asarray(p, dtype=float)
    if d.on_feature(p)[0]:
        raise GeometryError(f"{p} lies on a sharp feature of {d.name}; use patch normals")
    g = d.grad_phi(p)[0]
    norm = np.linalg.norm(g)
    if norm == 0:
        raise GeometryError(f"gradient of phi vanishes at {p}")
    return g / norm


# --- built-in test domains -------------------------------------------------


def _ellipse() -> DomainModel:
    a, b = 1.0, 0.75

    def phi(p):
        return p[:, 0] ** 2 / a**2 + p[:, 1] ** 2 / b**2 - 1.0

    def grad(p):
        return np.stack([2 * p[:, 0] / a**2, 2 * p[:, 1] / b**2], axis=1)

    patch = CurvePatch(
        lambda t: np.stack([a * np.cos(t), b * np.sin(t)], axis=1),
        lambda t: np.stack([-a * np.sin(t), b * np.cos(t)], axis=1),
        0.0, 2 * np.pi, closed=True,
    )
    perimeter = 4 * a * special.ellipe(1 - (b / a) ** 2)
    imp = ImplicitDomain(2, phi, grad, np.array([[-a, -b], [a, b]]))
    origin = np.zeros(2)
    return DomainModel(
        "ellipse", imp, (patch,), np.pi * a * b, perimeter, origin, origin, 0.5,
        BoundaryKind.CURVES, runge_center=origin,
    )


def _disk_sector() -> DomainModel:
    def phi(p):
        r = np.hypot(p[:, 0], p[:, 1])
        return np.maximum(r - 1.0, np.minimum(p[:, 0], -p[:, 1]))

    def grad(p):
        r = np.hypot(p[:, 0], p[:, 1])
        cut = np.minimum(p[:, 0], -p[:, 1])
        g = np.zeros_like(p)
        arc = r - 1.0 >= cut
        rr = np.where(r > 0, r, 1.0)
        g[arc] = p[arc] / rr[arc, None]
        use_x = ~arc & (p[:, 0] <= -p[:, 1])
        g[use_x, 0] = 1.0
        use_y = ~arc & ~use_x
        g[use_y, 1] = -1.0
        return g

    lower = CurvePatch(  # (0,0) -> (1,0), outward normal (0,-1)
        lambda t: np.stack([t, np.zeros_like(t)], axis=1),
        lambda t: np.stack([np.ones_like(t), np.zeros_like(t)], axis=1),
        0.0, 1.0,
    )
    arc = CurvePatch(
        lambda t: np.stack([np.cos(t), np.sin(t)], axis=1),
        lambda t: np.stack([-np.sin(t), np.cos(t)], axis=1),
        0.0, 1.5 * np.pi,
    )
    right = CurvePatch(  # (0,-1) -> (0,0), outward normal (1,0)
        lambda t: np.stack([np.zeros_like(t), t - 1.0], axis=1),
        lambda t: np.stack([np.zeros_like(t), np.ones_like(t)], axis=1),
        0.0, 1.0,
    )
    imp = ImplicitDomain(2, phi, grad, np.array([[-1.0, -1.0], [1.0, 1.0]]))
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, -1.0]])
    witness = np.array([-0.3, 0.3])
    xr = 0.5 * np.array([np.cos(0.75 * np.pi), np.sin(0.75 * np.pi)])
    return DomainModel(
        "disk-sector", imp, (lower, arc, right), 0.75 * np.pi, 2 + 1.5 * np.pi,
        witness, xr, 0.3, BoundaryKind.CURVES, corners=corners, runge_center=xr,
    )


CASSINI_A = 0.95
CASSINI_B = 1.0


def _cassini() -> DomainModel:
    a, b = CASSINI_A, CASSINI_B

    def phi(p):
        x, y = p[:, 0], p[:, 1]
        return ((x + a) ** 2 + y**2) * ((x - a) ** 2 + y**2) - b**4

    def grad(p):
        x, y = p[:, 0], p[:, 1]
        u = (x + a) ** 2 + y**2
        v = (x - a) ** 2 + y**2
        gx = 2 * (x + a) * v + 2 * (x - a) * u
        gy = 2 * y * v + 2 * y * u
        return np.stack([gx, gy], axis=1)

    def radius2(t):
        s = np.sin(2 * t)
        root = np.sqrt(b**4 - a**4 * s**2)
        big_r = a**2 * np.cos(2 * t) + root
        dbig_r = -2 * a**2 * s - 2 * a**4 * s * np.cos(2 * t) / root
        return big_r, dbig_r

    def point(t):
        r = np.sqrt(radius2(t)[0])
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)

    def tangent(t):
        big_r, dbig_r = radius2(t)
        r = np.sqrt(big_r)
        dr = dbig_r / (2 * r)
        return np.stack(
            [dr * np.cos(t) - r * np.sin(t), dr * np.sin(t) + r * np.cos(t)], axis=1
        )

    patch = CurvePatch(point, tangent, 0.0, 2 * np.pi, closed=True)
    xmax = np.sqrt(a**2 + b**2)
    # the top of the oval is where d(r sin t)/dt = 0; found numerically once
    ts = np.linspace(0.0, np.pi, 20001)
    ymax = float(point(ts)[:, 1].max()) + 1e-6
    imp = ImplicitDomain(2, phi, grad, np.array([[-xmax, -ymax], [xmax, ymax]]))
    origin = np.zeros(2)
    return DomainModel(
        "cassini", imp, (patch,), None, patch.length(), origin, origin, 0.3,
        BoundaryKind.CURVES, runge_center=origin, meta={"a": a, "b": b},
    )


def _ellipsoid() -> DomainModel:
    ax = np.array([1.0, 0.7, 0.7])

    def phi(p):
        return np.sum((p / ax) ** 2, axis=1) - 1.0

    def grad(p):
        return 2 * p / ax**2

    def point(u, v):  # u polar angle from +z, v azimuth
        return np.stack(
            [ax[0] * np.sin(u) * np.cos(v), ax[1] * np.sin(u) * np.sin(v), ax[2] * np.cos(u)], axis=1
        )

    def tangents(u, v):
        tu = np.stack([ax[0] * np.cos(u) * np.cos(v), ax[1] * np.cos(u) * np.sin(v), -ax[2] * np.sin(u)], axis=1)
        tv = np.stack([-ax[0] * np.sin(u) * np.sin(v), ax[1] * np.sin(u) * np.cos(v), np.zeros_like(u)], axis=1)
        return tu, tv

    def normal(u, v):
        g = grad(point(u, v))
        return g / np.linalg.norm(g, axis=1)[:, None]

    patch = SurfacePatch(point, tangents, (0.0, np.pi, 0.0, 2 * np.pi), 1, normal)
    inv2 = 1.0 / ax**2
    area = 4 * np.pi * np.prod(ax) * special.elliprg(*inv2)
    imp = ImplicitDomain(3, phi, grad, np.stack([-ax, ax]))
    origin = np.zeros(3)
    return DomainModel(
        "ellipsoid", imp, (patch,), 4 / 3 * np.pi * np.prod(ax), float(area), origin, origin,
        0.5, BoundaryKind.SMOOTH_SURFACE, runge_center=origin,
    )


LSHAPE_HALF_HEIGHT = 1.0 / 3.0


def _lshape() -> DomainModel:
    c = LSHAPE_HALF_HEIGHT
    poly = np.array([[-1, -1], [0, -1], [0, 0], [1, 0], [1, 1], [-1, 1]], dtype=float)

    def phi(p):
        box = np.maximum(np.maximum(np.abs(p[:, 0]) - 1, np.abs(p[:, 1]) - 1), np.abs(p[:, 2]) - c)
        notch = np.minimum(p[:, 0], -p[:, 1])
        return np.maximum(box, notch)

    def grad(p):
        ex, ey, ez = np.abs(p[:, 0]) - 1, np.abs(p[:, 1]) - 1, np.abs(p[:, 2]) - c
        box = np.maximum(np.maximum(ex, ey), ez)
        notch = np.minimum(p[:, 0], -p[:, 1])
        g = np.zeros_like(p)
        use_box = box >= notch
        kx = use_box & (ex >= ey) & (ex >= ez)
        ky = use_box & ~kx & (ey >= ez)
        kz = use_box & ~kx & ~ky
        g[kx, 0] = np.sign(p[kx, 0])
        g[ky, 1] = np.sign(p[ky, 1])
        g[kz, 2] = np.sign(p[kz, 2])
        nx = ~use_box & (p[:, 0] <= -p[:, 1])
        ny = ~use_box & ~nx
        g[nx, 0] = 1.0
        g[ny, 1] = -1.0
        return g

    faces, patches = [], []
    z = np.array([0.0, 0.0, 1.0])
    # top and bottom: the L polygon, split into unit squares for the patches
    squares = [(-1.0, 0.0), (0.0, 0.0), (-1.0, -1.0)]
    for sgn in (1.0, -1.0):
        origin = np.array([0.0, 0.0, sgn * c])
        e1 = np.array([1.0, 0.0, 0.0])
        e2 = np.array([0.0, sgn, 0.0])  # keeps (e1, e2, normal) right-handed
        local = poly.copy()
        local[:, 1] *= sgn
        if sgn < 0:
            local = local[::-1]
        faces.append(PlanarFace(origin, e1, e2, sgn * z, local))
        for x0, y0 in squares:
            patches.append(_flat_patch(np.array([x0, y0, sgn * c]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), sgn * z))
    # side faces, one per polygon edge
    for i in range(len(poly)):
        pa, pb = poly[i], poly[(i + 1) % len(poly)]
        edge = pb - pa
        length = float(np.linalg.norm(edge))
        t = np.array([edge[0], edge[1], 0.0]) / length
        n = np.array([edge[1], -edge[0], 0.0]) / length
        origin = np.array([pa[0], pa[1], -c])
        local = np.array([[0, 0], [length, 0], [length, 2 * c], [0, 2 * c]], dtype=float)
        faces.append(PlanarFace(origin, t, z, n, local))
        patches.append(_flat_patch(origin, t * length, z * 2 * c, n))
    corners, edges = [], []
    for i in range(len(poly)):
        pa, pb = poly[i], poly[(i + 1) % len(poly)]
        for zz in (-c, c):
            corners.append([pa[0], pa[1], zz])
            edges.append((np.array([pa[0], pa[1], zz]), np.array([pb[0], pb[1], zz])))
        edges.append((np.array([pa[0], pa[1], -c]), np.array([pa[0], pa[1], c])))
    area = 2 * 3.0 + 8.0 * 2 * c
    imp = ImplicitDomain(3, phi, grad, np.array([[-1, -1, -c], [1, 1, c]], dtype=float))
    witness = np.array([-0.5, 0.5, 0.0])
    xr = np.array([0.5, 0.5, 0.0])
    return DomainModel(
        "lshape3d", imp, tuple(patches), 0.75 * 2 * 2 * 2 * c, area, witness, witness, 0.3,
        BoundaryKind.POLYHEDRAL, corners=np.array(corners), edges=tuple(edges),
        faces=tuple(faces), runge_center=xr,
    )


def _flat_patch(origin, du, dv, n) -> SurfacePatch:
    """Parallelogram ``origin + u*du + v*dv`` on the unit square."""
    origin, du, dv, n = (np.asarray(x, float) for x in (origin, du, dv, n))
    orient = 1 if np.cross(du, dv) @ n > 0 else -1

    def point(u, v):
        return origin + u[:, None] * du + v[:, None] * dv

    def tangents(u, v):
        return np.broadcast_to(du, (len(u), 3)), np.broadcast_to(dv, (len(u), 3))

    return SurfacePatch(point, tangents, (0.0, 1.0, 0.0, 1.0), orient, lambda u, v: np.broadcast_to(n, (len(u), 3)).copy())


TORUS_R = 1.0
TORUS_MINOR = 0.32


def _torus() -> DomainModel:
    big, r = TORUS_R, TORUS_MINOR

    def phi(p):
        rho = np.hypot(p[:, 0], p[:, 1])
        return np.hypot(rho - big, p[:, 2]) - r

    def grad(p):
        rho = np.hypot(p[:, 0], p[:, 1])
        rho_s = np.where(rho > 0, rho, 1.0)
        q = np.hypot(rho - big, p[:, 2])
        q_s = np.where(q > 0, q, 1.0)
        f = (rho - big) / q_s / rho_s
        return np.stack([f * p[:, 0], f * p[:, 1], p[:, 2] / q_s], axis=1)

    def point(u, v):  # u around the z axis, v around the tube
        w = big + r * np.cos(v)
        return np.stack([w * np.cos(u), w * np.sin(u), r * np.sin(v)], axis=1)

    def tangents(u, v):
        w = big + r * np.cos(v)
        tu = np.stack([-w * np.sin(u), w * np.cos(u), np.zeros_like(u)], axis=1)
        tv = np.stack([-r * np.sin(v) * np.cos(u), -r * np.sin(v) * np.sin(u), r * np.cos(v)], axis=1)
        return tu, tv

    def normal(u, v):
        return np.stack([np.cos(v) * np.cos(u), np.cos(v) * np.sin(u), np.sin(v)], axis=1)

    patch = SurfacePatch(point, tangents, (0.0, 2 * np.pi, 0.0, 2 * np.pi), 1, normal)
    ext = big + r
    imp = ImplicitDomain(3, phi, grad, np.array([[-ext, -ext, -r], [ext, ext, r]]))
    witness = np.array([big, 0.0, 0.0])
    return DomainModel(
        "torus", imp, (patch,), 2 * np.pi**2 * big * r**2, 4 * np.pi**2 * big * r,
        witness, witness, 0.2, BoundaryKind.SMOOTH_SURFACE, runge_center=witness,
    )


DECOTET_SCALE = 40.0 ** (1.0 / 3.0)
DECOTET_LEVEL = 15.0


def decotet_quartic(p: Array) -> Array:
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    return (
        (x - 2) ** 2 * (x + 2) ** 2 + (y - 2) ** 2 * (y + 2) ** 2 + (z - 2) ** 2 * (z + 2) ** 2
        + 3 * (x * x * y * y + y * y * z * z + z * z * x * x) + 6 * x * y * z
        - 10 * (x * x + y * y + z * z)
    )


def decotet_quartic_grad(p: Array) -> Array:
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    gx = 4 * x * (x * x - 4) + 6 * x * (y * y + z * z) + 6 * y * z - 20 * x
    gy = 4 * y * (y * y - 4) + 6 * y * (x * x + z * z) + 6 * x * z - 20 * y
    gz = 4 * z * (z * z - 4) + 6 * z * (x * x + y * y) + 6 * x * y - 20 * z
    return np.stack([gx, gy, gz], axis=1)


def _decotet() -> DomainModel:
    a = DECOTET_SCALE

    def phi(p):
        return decotet_quartic(a * p) + DECOTET_LEVEL

    def grad(p):
        return a * decotet_quartic_grad(a * p)

    # the zero set stays inside |a x_i| < 3.63 (grid search with margin)
    half = 3.63 / a
    imp = ImplicitDomain(3, phi, grad, np.array([[-half] * 3, [half] * 3]))
    witness = np.full(3, -1.7 / a)
    x0 = np.array([1.0, -2.5, 1.0]) / a
    return DomainModel(
        "decotet", imp, (), None, None, witness, x0, 0.05, BoundaryKind.IMPLICIT,
        runge_center=witness,
    )


class Builtin(enum.Enum):
    ELLIPSE = "ellipse"
    DISK_SECTOR = "disk-sector"
    CASSINI_OVAL = "cassini"
    ELLIPSOID = "ellipsoid"
    LSHAPE_3D = "lshape3d"
    TORUS = "torus"
    DECO_TETRAHEDRON = "decotet"


_FACTORIES = {
    Builtin.ELLIPSE: _ellipse,
    Builtin.DISK_SECTOR: _disk_sector,
    Builtin.CASSINI_OVAL: _cassini,
    Builtin.ELLIPSOID: _ellipsoid,
    Builtin.LSHAPE_3D: _lshape,
    Builtin.TORUS: _torus,
    Builtin.DECO_TETRAHEDRON: _decotet,
}

_CACHE: dict[Builtin, DomainModel] = {}


def make_builtin(name: str | Builtin) -> DomainModel:
    """Return one of the seven test domains by enum or CLI name."""
    key = name if isinstance(name, Builtin) else Builtin(str(name).lower())
    if key not in _CACHE:
        _CACHE[key] = _FACTORIES[key]()
    return _CACHE[key]


def builtin_names() -> list[str]:
    return [b.value for b in Builtin]
