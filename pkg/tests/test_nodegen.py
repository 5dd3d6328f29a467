import io

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial import cKDTree

from mfquad.geometry import make_builtin
from mfquad.nodegen import (
    NeighborIndex,
    NodeGenError,
    SampleMode,
    advancing_front,
    halton,
    knn,
    make_X,
    read_nodes,
    rejection_sample,
    write_nodes,
)


def brute_knn(points, p, k):
    d2 = ((points - p) ** 2).sum(axis=1)
    return np.lexsort((np.arange(len(points)), d2))[:k]


def test_knn_examples():
    idx = NeighborIndex(np.array([[0.3, 0.4]]))
    np.testing.assert_array_equal(knn(idx, [0.0, 0.0], 1), [0])
    grid = NeighborIndex(np.array([[1.0, 1], [0, 0], [1, 0], [0, 1]]))
    np.testing.assert_array_equal(knn(grid, [0.5, 0.5], 4), [0, 1, 2, 3])
    with pytest.raises(ValueError):
        knn(grid, [0.0, 0.0], 5)


def test_knn_random_matches_brute_force():
    rng = np.random.default_rng(1)
    pts = rng.random((1000, 2))
    idx = NeighborIndex(pts)
    queries = rng.random((50, 2))
    got = idx.query(queries, 30)
    for q, row in zip(queries, got):
        np.testing.assert_array_equal(row, brute_knn(pts, q, 30))


@given(st.integers(0, 2**31), st.integers(1, 40), st.sampled_from([2, 3]))
def test_knn_property_with_ties(seed, k, dim):
    rng = np.random.default_rng(seed)
    # integer lattice points produce many exact distance ties
    pts = rng.integers(0, 4, (60, dim)).astype(float)
    q = rng.integers(0, 4, dim).astype(float) + 0.5 * rng.integers(0, 2, dim)
    np.testing.assert_array_equal(NeighborIndex(pts).query(q, k), brute_knn(pts, q, k))


def test_halton_prefix():
    np.testing.assert_allclose(halton(0, 3, 2), [[0.5, 1 / 3], [0.25, 2 / 3], [0.75, 1 / 9]])
    np.testing.assert_allclose(halton(5, 4, 3), halton(0, 9, 3)[5:])


def test_rejection_grid_count():
    d = make_builtin("ellipse")
    ns = rejection_sample(d, 0.1, SampleMode.GRID, seed=1)
    assert abs(ns.n_y - 236) <= 0.15 * 236


def test_rejection_halton_seeds():
    d = make_builtin("ellipse")
    a = rejection_sample(d, 0.05, "Halton", seed=1)
    b = rejection_sample(d, 0.05, "Halton", seed=2)
    assert not np.array_equal(a.Y, b.Y)
    assert abs(a.n_y - b.n_y) <= 0.05 * a.n_y
    assert cKDTree(a.Z).query(a.Z, 2)[0][:, 1].min() >= 0.05 * (1 - 1e-12)


def test_rejection_degenerate():
    ns = rejection_sample(make_builtin("ellipse"), 5.0, "Halton", seed=1)
    assert ns.n_z <= 2 and ns.meta.get("degenerate")


def test_rejection_needs_gradient():
    d = make_builtin("ellipse")
    from dataclasses import replace

    bad = replace(d, implicit=replace(d.implicit, grad_phi=None))
    with pytest.raises(NodeGenError):
        rejection_sample(bad, 0.1)


def test_af_ellipse_boundary_count():
    ns = advancing_front(make_builtin("ellipse"), 0.1, 1)
    assert abs(ns.n_z - 55) <= 3


def test_af_sector_corners_present_per_patch():
    ns = advancing_front(make_builtin("disk-sector"), 0.1, 1)
    for c in ([0, 0], [1, 0], [0, -1]):
        hits = np.flatnonzero(np.all(ns.Z == c, axis=1))
        assert len(hits) == 2  # one copy per adjacent patch
        assert not np.allclose(ns.normals[hits[0]], ns.normals[hits[1]])
    # each distinct point counted once in Y
    assert len(np.unique(ns.Y, axis=0)) == ns.n_y


def test_af_torus_on_zero_set_and_outward():
    d = make_builtin("torus")
    ns = advancing_front(d, 0.1, 1)
    assert np.abs(d.phi(ns.Z)).max() <= 1e-10
    assert (np.einsum("ij,ij->i", ns.normals, d.grad_phi(ns.Z)) > 0).all()
    assert (d.phi(ns.interior) < 0).all()


@pytest.mark.parametrize("h", [0.1, 0.05])
def test_af_quasi_uniform(h):
    ns = advancing_front(make_builtin("ellipse"), h, 3)
    nn = cKDTree(ns.Y).query(ns.Y, 2)[0][:, 1]
    assert nn.max() / nn.min() < 4


def test_af_rejection_rules():
    d = make_builtin("ellipse")
    h = 0.05
    ns = advancing_front(d, h, 2)
    dist = d.implicit.boundary_distance(ns.interior)
    assert dist.min() >= 0.5 * h * (1 - 1e-9)
    nn = cKDTree(ns.interior).query(ns.interior, 2)[0][:, 1]
    assert nn.min() >= 0.9 * h * (1 - 1e-9)


def test_make_X_size_and_features():
    d = make_builtin("ellipse")
    ny = advancing_front(d, 0.05, 1).n_y
    X = make_X(d, 0.05, 1)
    assert abs(X.n_y - ny / 1.6**2) <= 0.2 * ny / 1.6**2
    L = make_X(make_builtin("lshape3d"), 0.1, 1)
    corner = np.array([0.0, 0.0, 1 / 3])
    assert np.any(np.all(np.abs(L.Y - corner) < 1e-12, axis=1))


@pytest.mark.parametrize("name", ["ellipse", "lshape3d", "decotet"])
def test_determinism(name):
    d = make_builtin(name)
    h = 0.15 if d.dim == 3 else 0.1
    a, b = advancing_front(d, h, 7), advancing_front(d, h, 7)
    assert np.array_equal(a.Y, b.Y) and np.array_equal(a.Z, b.Z) and np.array_equal(a.normals, b.normals)


def test_csv_round_trip_bit_exact():
    ns = advancing_front(make_builtin("disk-sector"), 0.1, 4)
    buf = io.StringIO()
    write_nodes(ns, buf)
    buf.seek(0)
    back = read_nodes(buf)
    assert np.array_equal(back.interior, ns.interior)
    assert np.array_equal(back.boundary, ns.boundary)
    assert np.array_equal(back.normals, ns.normals)
    assert back.h == ns.h and back.seed == ns.seed
