import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from korn_lab.fields import (GaussRule, Poly, QuadratureWarning, distance_sliced_rule,
                             entrywise_norm_r, integrate_poly, weighted_Lq_norm)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10 ** 6))
def test_gauss_exact_to_its_degree(G, seed):
    rng = np.random.default_rng(seed)
    rule = GaussRule(G)
    p = Poly.random(3, rule.exact_degree, rng, integer=True)
    lo = rng.integers(-3, 3, 3)
    hi = lo + rng.integers(1, 3, 3)
    exact = p.integrate_box(lo.tolist(), hi.tolist())
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        got = integrate_poly(p, lo, hi, rule)
    assert got == pytest.approx(float(exact), rel=1e-12, abs=1e-9)


def test_gauss_budget_warning():
    p = Poly.var(2, 0) * Poly.var(2, 0) * Poly.var(2, 0) * Poly.var(2, 0)
    with pytest.warns(QuadratureWarning):
        integrate_poly(p, [0, 0], [1, 1], GaussRule(2))


def test_exact_integration_is_rational():
    x = Poly.var(2, 0, Fraction(1))
    y = Poly.var(2, 1, Fraction(1))
    assert (x * x * y).integrate_box([0, 0], [1, 1]) == Fraction(1, 6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_product_rule(seed):
    rng = np.random.default_rng(seed)
    p = Poly.random(3, 2, rng, integer=True)
    q = Poly.random(3, 2, rng, integer=True)
    for i in range(3):
        assert (p * q).diff(i) == p.diff(i) * q + p * q.diff(i)


def test_distance_sliced_rule_oracle():
    # int_{[0,1]^3} rho^2 = 1/40 with rho the distance to the boundary
    x, w = distance_sliced_rule(3, 4)
    rho = np.minimum(x, 1 - x).min(1)
    assert np.dot(w, rho ** 2) == pytest.approx(1 / 40, rel=1e-13)
    assert w.sum() == pytest.approx(1.0, rel=1e-14)
    # identity field: |I|^2 rho^2 integrates to 3/40
    assert np.dot(w, 3 * rho ** 2) == pytest.approx(3 / 40, rel=1e-13)


def test_entrywise_norms():
    M = np.array([[[3.0, -4.0], [0.0, 0.0]]])
    assert entrywise_norm_r(M, 2)[0] == 5
    assert entrywise_norm_r(M, 1)[0] == 7
    assert entrywise_norm_r(M, np.inf)[0] == 4


def test_weighted_norm_validates():
    with pytest.raises(ValueError):
        weighted_Lq_norm(np.ones(3), np.ones(3), None, 1.0)
    with pytest.raises(ValueError):
        weighted_Lq_norm(np.ones(3), np.ones(3), np.ones(3), 2.0, beta=-1)
    v = weighted_Lq_norm(np.ones(2), np.array([1.0, 1.0]), np.array([1.0, 2.0]), 2.0, beta=1)
    assert v == pytest.approx(np.sqrt(1 + 0.25))


def test_mesh_cells_partition_union_of_omegas(lshape2_mesh, rng):
    m = lshape2_mesh
    cov = m.cover
    olo, ohi = cov.omega_bounds()
    unit = m.overlaps.unit
    lo = np.asarray(cov.grid.origin) + unit * m.cell_lo
    hi = np.asarray(cov.grid.origin) + unit * m.cell_hi
    x = lo.min(0) + (hi.max(0) - lo.min(0)) * rng.random((20000, 2))
    in_union = np.zeros(len(x), bool)
    for a, b in zip(olo, ohi):
        in_union |= np.all((x > a) & (x < b), 1)
    hits = np.zeros(len(x), int)
    for a, b in zip(lo, hi):
        hits += np.all((x >= a) & (x < b), 1)
    assert np.all(hits[in_union] == 1)
    assert np.all(hits[~in_union] == 0)


def test_mesh_measures_are_exact(lshape2_mesh):
    m = lshape2_mesh
    cov = m.cover
    assert np.allclose(m.omega_volume(), (9 / 8 * cov.side) ** 2, rtol=1e-13)
    oc = m.overlaps
    t = oc.nodes
    assert np.allclose(m.b_volume()[t], oc.side[t] ** 2, rtol=1e-13)


def test_shadow_integral_against_brute(lshape2_mesh, rng):
    m = lshape2_mesh
    tree = m.tree
    v = rng.random(len(m))
    got = m.shadow_integral(v)
    for t in rng.choice(len(m.cover), 10, replace=False):
        desc = tree.descendants(t)
        members = np.isin(m.pair_t, desc)
        nodes = np.unique(m.pair_node[members])
        assert got[t] == pytest.approx(v[nodes].sum(), rel=1e-12)


def test_shadow_adjoint_is_transpose(lshape2_mesh, rng):
    m = lshape2_mesh
    v = rng.random(len(m))
    c = rng.random(len(m.cover))
    assert np.dot(c, m.shadow_integral(v)) == pytest.approx(np.dot(m.shadow_adjoint(c), v), rel=1e-12)
