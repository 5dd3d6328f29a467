import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfquad.geometry import make_builtin
from mfquad.mfd import (
    Operator,
    StencilDeficiencyError,
    StencilSpec,
    assemble,
    assemble_B_dnu,
    assemble_B_normal,
    assemble_L_div,
    assemble_L_laplacian,
    monomial_exponents,
    poly_dim,
    polyharmonic_weights,
)
from mfquad.nodegen import advancing_front, make_X


def field_coeffs(X, F):
    """Component-major coefficient vector of a vector field sampled on X."""
    return np.concatenate([F(X)[:, k] for k in range(X.shape[1])])


@pytest.fixture(scope="module")
def ellipse_nodes():
    d = make_builtin("ellipse")
    ns = advancing_front(d, 0.1, 1)
    return ns, make_X(d, 0.1, 1).Y


def test_stencil_spec_counts():
    assert StencilSpec(4, 2).n_L == 2 * 10 and StencilSpec(4, 2).n_B == 2 * 6
    assert StencilSpec(4, 3).n_L == 40 and StencilSpec(4, 3).n_B == 20
    assert poly_dim(3, 2) == len(monomial_exponents(3, 2)) == 6
    with pytest.raises(ValueError):
        StencilSpec(1, 2)


def test_value_at_node_is_identity():
    rng = np.random.default_rng(0)
    st_ = rng.random((12, 2))
    w = polyharmonic_weights(st_[4], st_, "value", 3)
    np.testing.assert_allclose(w, np.eye(12)[4], atol=1e-10)


def test_central_difference_1d():
    h = 0.1
    w = polyharmonic_weights([0.0], np.array([-h, 0.0, h]), 0, 3)
    np.testing.assert_allclose(w, [-1 / (2 * h), 0, 1 / (2 * h)], rtol=1e-10, atol=1e-10)


def test_deficient_stencil_raises():
    pts = np.stack([np.linspace(0, 1, 12), np.zeros(12)], axis=1)  # collinear
    with pytest.raises(StencilDeficiencyError):
        polyharmonic_weights([0.5, 0.0], pts, ("partial", 0), 3)


FUNCTIONALS = [("value", 0), ("partial", 0), ("partial", 1), ("laplacian", 0)]


def _apply_to_monomial(kind, k, e, c):
    e = np.array(e)
    if kind == "value":
        return np.prod(c**e)
    if kind == "partial":
        if e[k] == 0:
            return 0.0
        e2 = e.copy()
        e2[k] -= 1
        return e[k] * np.prod(c**e2)
    total = 0.0
    for j in range(len(e)):
        if e[j] >= 2:
            e2 = e.copy()
            e2[j] -= 2
            total += e[j] * (e[j] - 1) * np.prod(c**e2)
    return total


@given(st.integers(0, 10_000), st.integers(2, 5), st.sampled_from(FUNCTIONALS))
def test_polynomial_exactness(seed, q, functional):
    rng = np.random.default_rng(seed)
    n = 2 * poly_dim(q, 2)
    stencil = rng.random((n, 2))
    center = stencil.mean(axis=0) + 0.05 * rng.standard_normal(2)
    try:
        w = polyharmonic_weights(center, stencil, functional, q)
    except StencilDeficiencyError:
        return
    kind, k = functional
    scale = 1 + np.abs(w).sum()
    for e in monomial_exponents(q, 2):
        vals = np.prod(stencil**e, axis=1)
        assert abs(w @ vals - _apply_to_monomial(kind, k, e, center)) <= 1e-9 * scale


def _jittered_stencil(seed):
    rng = np.random.default_rng(seed)
    grid = np.stack(np.meshgrid(np.arange(5.0), np.arange(4.0)), -1).reshape(-1, 2)
    return grid + 0.3 * rng.random((20, 2)), np.array([2.0, 1.5]) + 0.2 * rng.random(2)


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_scale_invariance(seed, s):
    stencil, c = _jittered_stencil(seed)
    w1 = polyharmonic_weights(c, stencil, ("partial", 1), 4)
    w2 = polyharmonic_weights(s * c, s * stencil, ("partial", 1), 4)
    assert np.abs(w2 * s - w1).max() <= 1e-12 * np.abs(w1).sum()
    v1 = polyharmonic_weights(c, stencil, "value", 4)
    v2 = polyharmonic_weights(s * c, s * stencil, "value", 4)
    assert np.abs(v2 - v1).max() <= 1e-12 * np.abs(v1).sum()


@pytest.mark.parametrize("s", [0.25, 8.0])
def test_scale_invariance_exact_for_powers_of_two(s):
    stencil, c = _jittered_stencil(1)
    w1 = polyharmonic_weights(c, stencil, ("partial", 0), 4)
    w2 = polyharmonic_weights(s * c, s * stencil, ("partial", 0), 4)
    assert np.array_equal(w2 * s, w1)


def test_L_div_constant_and_linear(ellipse_nodes):
    ns, X = ellipse_nodes
    spec = StencilSpec(4, 2)
    L = assemble_L_div(X, ns.Y, spec).to_scipy()
    assert (np.diff(L.indptr) <= 2 * spec.n_L).all()
    const = field_coeffs(X, lambda p: np.tile([0.3, -1.2], (len(p), 1)))
    assert np.abs(L @ const).max() <= 1e-9
    np.testing.assert_allclose(L @ field_coeffs(X, lambda p: p), 2.0, atol=1e-8)


def test_B_normal_rows(ellipse_nodes):
    ns, X = ellipse_nodes
    B = assemble_B_normal(X, ns.Z, ns.normals, StencilSpec(4, 2)).to_scipy()
    nX = len(X)
    for i in range(0, ns.n_z, 7):
        nu = ns.normals[i]
        tau = np.array([-nu[1], nu[0]])
        np.testing.assert_allclose(B[i] @ np.repeat(nu, nX), 1.0, atol=1e-9)
        assert abs(B[i] @ np.repeat(tau, nX)) <= 1e-9


def test_B_normal_converges_on_smooth_field():
    d = make_builtin("ellipse")

    def F(p):
        return np.stack([np.sin(p[:, 0] + p[:, 1]), np.cos(2 * p[:, 0])], axis=1)

    errs = []
    hs = (0.2, 0.1, 0.05)
    for h in hs:
        ns = advancing_front(d, h, 1)
        X = make_X(d, h, 1).Y
        B = assemble_B_normal(X, ns.Z, ns.normals, StencilSpec(4, 2))
        exact = np.einsum("ij,ij->i", ns.normals, F(ns.Z))
        errs.append(np.abs(B.to_scipy() @ field_coeffs(X, F) - exact).max())
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert order >= 4 - 1 - 0.5


@pytest.mark.parametrize("q, hs", [(3, (0.2, 0.1, 0.05)), (4, (0.2, 0.1, 0.05)), (5, (0.1, 0.05, 0.025))])
def test_L_div_convergence(q, hs):
    d = make_builtin("ellipse")

    def F(p):
        return np.stack([np.exp(p[:, 0]) * np.sin(p[:, 1]), np.cos(p[:, 0] * p[:, 1])], axis=1)

    def divF(p):
        return np.exp(p[:, 0]) * np.sin(p[:, 1]) - p[:, 0] * np.sin(p[:, 0] * p[:, 1])

    # at h = 0.2 a q = 5 stencil still spans most of the minor axis
    errs = []
    for h in hs:
        # stencil nodes at spacing h, evaluation points from another seed
        X = advancing_front(d, h, 1).Y
        Y = advancing_front(d, h, 2).Y
        L = assemble_L_div(X, Y, StencilSpec(q, 2))
        errs.append(np.abs(L.to_scipy() @ field_coeffs(X, F) - divF(Y)).max())
    assert np.polyfit(np.log(hs), np.log(errs), 1)[0] >= q - 1 - 0.5


def test_laplacian_operators(ellipse_nodes):
    ns, _ = ellipse_nodes
    Y = ns.Y
    L = assemble_L_laplacian(Y, Y, 4).to_scipy()
    np.testing.assert_allclose(L @ (Y**2).sum(axis=1), 4.0, atol=1e-8)
    assert np.abs(L @ (2 * Y[:, 0] - Y[:, 1] + 1)).max() <= 1e-9
    L5 = assemble_L_laplacian(Y, Y, 5).to_scipy()
    np.testing.assert_allclose(L5 @ (Y[:, 0] ** 2 * Y[:, 1]), 2 * Y[:, 1], atol=1e-8)
    B = assemble_B_dnu(Y, ns.Z, ns.normals, 4).to_scipy()
    np.testing.assert_allclose(B @ (3 * Y[:, 0] + Y[:, 1]), ns.normals @ [3.0, 1.0], atol=1e-9)


def test_assemble_shapes(ellipse_nodes):
    ns, X = ellipse_nodes
    div = assemble(X, ns.Y, ns.Z, ns.normals, 4)
    assert div.L.shape == (ns.n_y, 2 * len(X)) and div.B.shape == (ns.n_z, 2 * len(X))
    lap = assemble(ns.Y, ns.Y, ns.Z, ns.normals, 4, Operator.LAPLACIAN)
    assert lap.L.shape == (ns.n_y, ns.n_y) and lap.B.shape == (ns.n_z, ns.n_y)
