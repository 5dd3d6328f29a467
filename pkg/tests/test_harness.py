import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from mfquad.geometry import make_builtin
from mfquad.harness.functions import TestKind, constant, eval_test, franke, fundamental, runge
from mfquad.harness.reference import (
    ReferenceAccuracyError,
    ReferenceUnavailable,
    adaptive_rect,
    boundary_integral,
    interior_integral,
    polar_reference,
    reference_integral,
)
from mfquad.harness.study import (
    ConfigError,
    ExperimentConfig,
    e_rms,
    fit_eoc,
    parse_config,
    report_rows,
    run_study,
    write_csv,
)
from mfquad.quadrature import Method


def franke_reference_formula(x, y):
    # the classic four-term formula on the unit square, coded independently
    return (
        0.75 * math.exp(-((9 * x - 2) ** 2) / 4 - ((9 * y - 2) ** 2) / 4)
        + 0.75 * math.exp(-((9 * x + 1) ** 2) / 49 - (9 * y + 1) / 10)
        + 0.5 * math.exp(-((9 * x - 7) ** 2) / 4 - ((9 * y - 3) ** 2) / 4)
        - 0.2 * math.exp(-((9 * x - 4) ** 2) - (9 * y - 7) ** 2)
    )


def test_runge_examples():
    f = runge([0.3, -0.2])
    assert eval_test(f, [0.3, -0.2]) == 1.0
    assert eval_test(f, [1.3, -0.2]) == pytest.approx(1 / 26, rel=1e-15)
    with pytest.raises(ValueError):
        eval_test(f, [0.0, 0.0, 0.0])


def test_franke_matches_independent_formula():
    f = franke(2)
    assert eval_test(f, [-1.0, -1.0]) == pytest.approx(franke_reference_formula(0, 0), rel=1e-15)
    rng = np.random.default_rng(0)
    for p in rng.uniform(-1, 1, (50, 2)):
        u = (p + 1) / 2
        assert eval_test(f, p) == pytest.approx(franke_reference_formula(*u), rel=1e-13, abs=1e-15)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_functions_finite_and_bounded(x, y, z):
    assert 0 < eval_test(runge([0, 0, 0]), [x, y, z]) <= 1
    assert np.isfinite(eval_test(franke(3), [x, y, z]))
    assert np.isfinite(eval_test(franke(2), [x, y]))


@pytest.mark.parametrize("fn", [runge([0.1, 0.2]), franke(2), runge([1, 0, 0]), franke(3), constant(3, 2.5)])
def test_x_antiderivative_matches_quad(fn):
    rng = np.random.default_rng(1)
    for p in rng.uniform(-1, 1, (5, fn.dim)):
        x0 = -1.2

        def g(t):
            q = p.copy()
            q[0] = t
            return eval_test(fn, q)

        val = integrate.quad(g, x0, p[0], epsabs=1e-15, epsrel=1e-14)[0]
        assert fn.x_antiderivative(p[None], x0)[0] == pytest.approx(val, rel=1e-12, abs=1e-15)


def test_fundamental_needs_normals():
    f = fundamental([0.0, 0.0])
    assert f.kind is TestKind.FUNDAMENTAL_GHAT and f.needs_normals
    with pytest.raises(ValueError):
        eval_test(f, [1.0, 0.0])
    with pytest.raises(ValueError):
        f.x_antiderivative([[1.0, 0.0]], 0.0)


@pytest.mark.parametrize(
    "name, target, value, tol",
    [
        ("ellipse", "interior", 3 * np.pi / 4, 1e-12),
        ("disk-sector", "interior", 3 * np.pi / 4, 1e-12),
        ("disk-sector", "boundary", 2 + 3 * np.pi / 2, 1e-12),
        ("torus", "boundary", 4 * np.pi**2 * 0.32, 1e-11),
        ("torus", "interior", 2 * np.pi**2 * 0.32**2, 1e-11),
        ("lshape3d", "interior", 2.0, 1e-12),
        ("ellipsoid", "interior", 4 / 3 * np.pi * 0.7 * 0.7, 1e-12),
    ],
)
def test_reference_measures(name, target, value, tol):
    d = make_builtin(name)
    assert abs(reference_integral(d, constant(d.dim), target) - value) <= tol * value


def test_reference_unavailable_for_implicit():
    with pytest.raises(ReferenceUnavailable):
        interior_integral(make_builtin("decotet"), franke(3))
    with pytest.raises(ReferenceUnavailable):
        boundary_integral(make_builtin("decotet"), franke(3))


def test_reference_polar_agreement():
    for name in ("ellipse", "disk-sector"):
        d = make_builtin(name)
        for fn in (runge(d.runge_center), franke(2)):
            a = reference_integral(d, fn, "interior")
            b = polar_reference(d, fn)
            assert abs(a - b) <= 1e-11 * abs(a)


def test_reference_stable_under_budget():
    d = make_builtin("disk-sector")
    fn = runge(d.runge_center)
    base = interior_integral(d, fn)
    finer = interior_integral(d, fn, tol=1e-14)
    assert abs(base - finer) <= 1e-12 * abs(base)


def test_reference_denominators_not_small():
    for name in ("ellipse", "disk-sector", "cassini", "ellipsoid", "lshape3d", "torus"):
        d = make_builtin(name)
        for fn, target in ((runge(d.runge_center), "interior"), (franke(d.dim), "interior"),
                           (runge(d.runge_center), "boundary")):
            assert abs(reference_integral(d, fn, target)) > 1e-3


def test_adaptive_rect_budget_error():
    with pytest.raises(ReferenceAccuracyError) as info:
        adaptive_rect(lambda u, v: np.abs(u - 0.3) ** 0.01 * np.sign(u - 0.3), (0, 1, 0, 1), max_depth=3)
    assert math.isfinite(info.value.estimate)


def test_rms_and_eoc():
    assert e_rms([3e-4]) == 3e-4
    assert e_rms([3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
    hs = np.array([0.1, 0.05, 0.025])
    assert fit_eoc(hs, 2 * hs**3) == pytest.approx(3.0)
    assert math.isnan(fit_eoc(hs, [1e-3, 1e-16, 1e-17]))


def test_config_parsing():
    cfg = parse_config(
        "domain = disk-sector\nmethod = bsp\nq_list = 4, 5\nh_list = 0.1 0.05\nseeds = 2  # comment\n"
        "constraint = 0,1\nsolver = qr\n"
    )
    assert cfg.method is Method.BSP and cfg.q_list == (4, 5) and cfg.h_list == (0.1, 0.05) and cfg.seeds == 2
    for bad in ("method = mfd", "domain = ellipse\nfoo = 1", "domain = ellipse\nseeds = 0",
                "domain = ellipse\nh_list = 0.05 0.1", "domain = ellipse\nnot a pair"):
        with pytest.raises(ConfigError):
            parse_config(bad)


def test_study_single_seed_and_determinism(tmp_path):
    cfg = ExperimentConfig("ellipse", Method.MFD, (4,), (0.2, 0.15, 0.1), 1)
    a = run_study(cfg)
    for c in a.cells:
        assert c.e_rms["f1"] == c.errors["f1"][0]
        assert c.seed_count == 1 and c.K_w > 0
    assert not math.isnan(a.eoc[(4, "f1")])
    write_csv(a, tmp_path / "a.csv")
    write_csv(run_study(cfg), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == "method,q,h,seed_count,N_Y,N_Z,e_rms_f1,e_rms_f2,e_rms_g1,K_w,K_v,EOC_f1,EOC_f2,EOC_g1,dropped_reason"
    assert len(report_rows(a)) == 3


def test_study_drops_overdetermined_cells():
    cfg = ExperimentConfig("ellipse", Method.MFD, (8,), (0.5, 0.2, 0.1), 1)
    rep = run_study(cfg)
    assert rep.cell(8, 0.5).dropped_reason.startswith("overdetermined")
