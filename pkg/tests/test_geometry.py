import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfquad.geometry import (
    GeometryError,
    boundary_normal,
    builtin_names,
    inside,
    make_builtin,
    project_to_boundary,
)
from mfquad.nodegen import halton

ALL = builtin_names()


def test_seven_domains():
    assert ALL == ["ellipse", "disk-sector", "cassini", "ellipsoid", "lshape3d", "torus", "decotet"]


@pytest.mark.parametrize(
    "name, interior, boundary",
    [
        ("ellipse", 3 * np.pi / 4, None),
        ("disk-sector", 3 * np.pi / 4, 2 + 3 * np.pi / 2),
        ("torus", 2 * np.pi**2 * 0.32**2, 4 * np.pi**2 * 0.32),
        ("lshape3d", 2.0, None),
    ],
)
def test_analytic_measures(name, interior, boundary):
    d = make_builtin(name)
    assert d.measure_interior == pytest.approx(interior, rel=1e-14)
    if boundary is not None:
        assert d.measure_boundary == pytest.approx(boundary, rel=1e-14)


def test_unknown_measures():
    assert make_builtin("cassini").measure_interior is None
    d7 = make_builtin("decotet")
    assert d7.measure_interior is None and d7.measure_boundary is None
    assert not d7.patches


def test_lshape_boundary_is_sum_of_faces():
    # 2x2x(2/3) box with one quadrant removed: top and bottom 3 each, sides 8 * 1 * 2/3
    assert make_builtin("lshape3d").measure_boundary == pytest.approx(6 + 8 * 2 / 3, rel=1e-14)


def test_inside_examples():
    e = make_builtin("ellipse")
    assert inside(e, [0.0, 0.0])
    assert not inside(e, [2.0, 0.0])
    assert not inside(make_builtin("disk-sector"), [0.5, -0.1])


@pytest.mark.parametrize("name", ALL)
def test_witness_and_box_corners(name):
    d = make_builtin(name)
    assert inside(d, d.interior_witness)
    lo, hi = d.bounding_box
    for corner in np.array(np.meshgrid(*zip(lo, hi))).reshape(d.dim, -1).T:
        assert not inside(d, corner)
    if d.x0 is not None:
        assert inside(d, d.x0)


def test_projection_examples():
    np.testing.assert_allclose(project_to_boundary(make_builtin("ellipse"), [1.05, 0.0]), [1, 0], atol=1e-12)
    np.testing.assert_allclose(project_to_boundary(make_builtin("torus"), [1.35, 0, 0]), [1.32, 0, 0], atol=1e-12)
    c = make_builtin("cassini")
    p = project_to_boundary(c, [0.0, 0.35])
    assert abs(c.phi(p)[0]) <= 1e-12


def test_projection_zero_gradient_returns_none():
    # the ellipse level set has a vanishing gradient at its center
    assert project_to_boundary(make_builtin("ellipse"), [0.0, 0.0]) is None


def test_normal_examples():
    np.testing.assert_allclose(boundary_normal(make_builtin("ellipse"), [1.0, 0.0]), [1, 0], atol=1e-12)
    np.testing.assert_allclose(boundary_normal(make_builtin("torus"), [1.32, 0, 0]), [1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(boundary_normal(make_builtin("lshape3d"), [-0.5, 0.5, 1 / 3]), [0, 0, 1], atol=1e-12)
    with pytest.raises(GeometryError):
        boundary_normal(make_builtin("disk-sector"), [0.0, 0.0])


def _patch_samples(d, n=1000):
    out = []
    for i, patch in enumerate(d.patches):
        if hasattr(patch, "t0"):
            u = halton(i * n, n, 2)[:, 0]
            t = patch.t0 + u * (patch.t1 - patch.t0)
            out.append((patch.point(t), patch.normal(t)))
        else:
            u0, u1, v0, v1 = patch.rect
            uv = halton(i * n, n, 2)
            u, v = u0 + uv[:, 0] * (u1 - u0), v0 + uv[:, 1] * (v1 - v0)
            out.append((patch.point(u, v), patch.normal(u, v)))
    return out


@pytest.mark.parametrize("name", [n for n in ALL if n != "decotet"])
def test_patches_on_zero_set_with_matching_normals(name):
    d = make_builtin(name)
    for pts, nrm in _patch_samples(d):
        assert np.abs(d.phi(pts)).max() <= 1e-10
        smooth = ~d.on_feature(pts, 1e-6)
        g = d.grad_phi(pts[smooth])
        np.testing.assert_allclose(nrm[smooth], g / np.linalg.norm(g, axis=1)[:, None], atol=1e-8)


@given(st.floats(0.0, 2 * np.pi), st.floats(0.0, 2 * np.pi), st.floats(0.02, 0.1))
def test_torus_projection_property(u, v, off):
    d = make_builtin("torus")
    n = np.array([np.cos(u) * np.cos(v), np.sin(u) * np.cos(v), np.sin(v)])
    on = np.array([np.cos(u), np.sin(u), 0.0]) + 0.32 * n
    p = project_to_boundary(d, on + off * n, h=0.1)
    np.testing.assert_allclose(p, on, atol=1e-10)
