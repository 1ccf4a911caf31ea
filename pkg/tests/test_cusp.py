import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from korn_lab.cusp import (CuspParams, InadmissibleExponentError, admissible_window,
                           check_admissible, cusp_field, cusp_slope, cusp_truncated_norms,
                           graded_integral, halving_growth, q_cube, strain_identity_residual,
                           v_norm_Q)
from korn_lab.fields import GaussRule, Poly, gauss_box, poly_gradient, eval_poly_array


def test_s_minus_one_is_constant():
    f = cusp_field(2.0, -1.0)
    x = np.random.default_rng(0).uniform(0.1, 0.9, (5, 3))
    assert np.allclose(f(x), [0, 0, 1])
    assert np.abs(f.gradient(x)).max() == 0


def test_gradient_matches_finite_differences(rng):
    f = cusp_field(2.0, -2.0)
    x = np.column_stack([rng.uniform(0, 1, 10), rng.uniform(0.2, 0.9, 10), np.zeros(10)])
    x[:, 2] = rng.uniform(0, 1, 10) * x[:, 1] ** 2
    e = 1e-6
    for d in range(3):
        dx = np.zeros(3)
        dx[d] = e
        fd = (f(x + dx) - f(x - dx)) / (2 * e)
        assert np.allclose(f.gradient(x)[:, :, d], fd, rtol=1e-6, atol=1e-6)


def test_field_structure(rng):
    f = cusp_field(2.0, -2.0)
    x = rng.uniform(0.1, 0.9, (8, 3))
    E = f.strain(x)
    assert np.abs(E[:, 1, 2]).max() == 0          # eps_23 = 0
    D = f.gradient(x)
    assert np.allclose(f.divergence(x), D[:, 1, 1])
    L = f.trace_free_strain(x)
    assert np.abs(np.trace(L, axis1=1, axis2=2)).max() < 1e-12


def test_densities_match_pointwise_integrals():
    # integrate over x1 in (0,1), x3 in (0, x2^gamma) with Gauss at fixed x2
    f = cusp_field(2.0, -2.0)
    for x2 in (0.1, 0.37, 0.8):
        x, w = gauss_box([0, 0], [1, x2 ** 2], GaussRule(4))
        X = np.column_stack([x[:, 0], np.full(len(x), x2), x[:, 1]])
        D = f.gradient(X)
        L = f.trace_free_strain(X)
        assert np.dot(w, (D ** 2).sum((1, 2))) == pytest.approx(f.density_grad(x2), rel=1e-12)
        assert np.dot(w, (L ** 2).sum((1, 2))) == pytest.approx(f.density_l(x2), rel=1e-12)


def test_admissible_window():
    assert admissible_window(2.0) == (-2.5, -1.5)
    check_admissible(2.0, -2.0)
    with pytest.raises(InadmissibleExponentError):
        check_admissible(2.0, -1.0)
    with pytest.raises(InadmissibleExponentError):
        check_admissible(1.0, -2.0)
    with pytest.raises(InadmissibleExponentError):
        cusp_field(0.5, -2.0)
    assert CuspParams(2.0, -2.0).admissible
    assert not CuspParams(2.0, -1.4).admissible
    with pytest.raises(ValueError):
        CuspParams(2.0, -2.0, eps=(0.0,))


@settings(max_examples=30, deadline=None)
@given(st.floats(1.2, 4.0), st.floats(0.05, 0.95))
def test_window_properties(gamma, t):
    lo, up = admissible_window(gamma)
    s = lo + t * (up - lo)
    e = CuspParams(gamma, s).exponents
    assert e["lhs_diverges"]
    assert e["rhs_converges"]


def test_closed_forms_vs_quadrature():
    for eps in (1e-2, 1e-3, 1e-4):
        r = cusp_truncated_norms(2.0, -2.0, eps)
        assert r.lhs_quad == pytest.approx(r.lhs, rel=1e-13)
        assert r.rhs_quad == pytest.approx(r.rhs, rel=1e-13)
        assert r.l2 == pytest.approx(r.strain2 - r.div2 / 3, rel=1e-14)
    # gamma = 2, s = -2: ||Dv||^2 = 2(1/eps - 1) + (4/3)(1 - eps)
    r = cusp_truncated_norms(2.0, -2.0, 1e-3)
    assert r.grad2 == pytest.approx(2 * (1e3 - 1) + 4 / 3 * (1 - 1e-3), rel=1e-14)
    assert r.l2 == pytest.approx(8 / 9 * (1 - 1e-3), rel=1e-14)


def test_q_cube_norm():
    f = cusp_field(2.0, -2.0)
    lo, hi = q_cube(2.0)
    x, w = gauss_box(lo, hi, GaussRule(30))
    assert np.dot(w, (f(x) ** 2).sum(1)) == pytest.approx(v_norm_Q(f), rel=1e-10)
    assert hi[2] < lo[1] ** 2                      # Q lies inside the cusp


def test_growth_and_slope():
    assert halving_growth(2.0, -2.0, 1e-3) >= 1.8
    r = cusp_slope(2.0, -2.0, [1e-3, 1e-4, 1e-5, 1e-6])
    assert abs(r["slope"] - r["predicted"]) <= 0.03 * abs(r["predicted"])


def test_truncation_validation():
    with pytest.raises(ValueError):
        cusp_truncated_norms(2.0, -2.0, 0.0)
    with pytest.raises(ValueError):
        cusp_truncated_norms(2.0, -2.0, 1.5)


def test_graded_integral():
    assert graded_integral(lambda x: x ** -0.5, 1e-8, 1.0) == pytest.approx(2 * (1 - 1e-4), rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_strain_identity_random_cubics(seed):
    rng = np.random.default_rng(seed)
    v = np.array([Poly.random(3, 3, rng) for _ in range(3)], dtype=object)
    x, w = gauss_box([0, 0, 0], [1, 1, 1], GaussRule(3))
    D = eval_poly_array(poly_gradient(v), x)
    assert strain_identity_residual(D, w) <= 1e-11
