from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from korn_lab.conformal import (GramError, SigmaElement, TruncationError, anchor_residual,
                                h_matrix, kernel_dimensions, orthonormalize_v_basis, project_out_v,
                                sigma_basis, split_W_plus_V, trace_free_part, trace_free_strain,
                                truncate_to_W0, v_generators)
from korn_lab.decompose import theta_duality
from korn_lab.fields import GaussRule, eval_poly_array, frob, gauss_box, poly_gradient


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(0, 10 ** 6))
def test_h_normalization_on_random_cubes(n, seed):
    rng = np.random.default_rng(seed)
    l = 2.0 ** rng.uniform(-6, 2)
    # the integrand depends on x - c only; local coordinates avoid the
    # cancellation of forming x - c for small cubes far from the origin
    z, w = gauss_box(np.full(n, -l / 2), np.full(n, l / 2), GaussRule(2))
    H = [h_matrix(i, z) for i in range(n)]
    G = np.array([[np.dot(w, frob(H[i], H[j])) for j in range(n)] for i in range(n)])
    expected = (3 * n - 2) / 12 * l ** (n + 2)
    assert np.abs(G - expected * np.eye(n)).max() <= 1e-13 * expected


def test_h_matrix_entries():
    z = np.array([1.0, 2.0, 3.0])
    H = h_matrix(1, z)
    assert np.array_equal(H, [[2, 1, 0], [-1, 2, -3], [0, 3, 2]])
    with pytest.raises(ValueError):
        h_matrix(3, z)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_trace_free_strain_kills_sigma(n):
    rng = np.random.default_rng(n)
    for _ in range(25 if n < 4 else 10):
        v = SigmaElement.random(n, rng).as_poly()
        L = trace_free_strain(v)
        assert all(p.is_zero() for p in L.flat)


def test_d_sigma_matches_velement():
    rng = np.random.default_rng(3)
    s = SigmaElement.random(3, rng)
    D = poly_gradient(s.as_poly())
    V = s.d_sigma().as_poly()
    assert all((a - b).is_zero() for a, b in zip(D.flat, V.flat))
    x = rng.standard_normal((10, 3))
    assert np.allclose(eval_poly_array(D, x), s.d_sigma()(x))


def test_sigma_element_rejects_non_skew():
    with pytest.raises(ValueError):
        SigmaElement(np.zeros(2), np.eye(2), 0, np.zeros(2), np.zeros(2))


@pytest.mark.parametrize("n,sig,v", [(2, 6, 4), (3, 10, 7), (4, 15, 11)])
def test_kernel_dimensions(n, sig, v):
    d = kernel_dimensions(n)
    assert d["sigma_rank"] == d["sigma_dim"] == sig
    assert d["v_rank"] == d["v_dim"] == v
    assert d["d_sigma_kernel"] == n
    assert len(sigma_basis(n)) == sig


def test_anchor_independence(rng):
    for n in (3, 4):
        s = SigmaElement.random(n, rng, integer=False)
        v = s.d_sigma()
        assert anchor_residual(v, rng.standard_normal(n), rng) <= 1e-10
        v2 = v.reanchor(rng.standard_normal(n))
        x = rng.standard_normal((20, n))
        assert np.allclose(v(x), v2(x), atol=1e-12)


def test_v_generators_trace_free_part():
    # l(phi) = lam-free part; for H_i it is zero (conformal Killing)
    x = np.random.default_rng(0).standard_normal((7, 3))
    G = v_generators(x, np.zeros(3))
    assert np.abs(trace_free_part(G)).max() < 1e-14


def test_orthonormal_basis_and_split(lshape2_mesh, rng):
    mesh = lshape2_mesh
    for beta in (0.0, 1.0):
        basis = orthonormalize_v_basis(mesh, 2.0, beta)
        assert np.abs(basis.inner() - np.eye(basis.m)).max() < 1e-12
        F = rng.standard_normal((len(mesh), 2, 2))
        split = split_W_plus_V(F, basis, mesh)
        assert split.residual < 1e-12
        assert split.coef_bound_ok
        assert split.C1 >= 1.0


def test_gram_error_on_degenerate_nodes(lshape2_mesh):
    with pytest.raises(GramError):
        orthonormalize_v_basis(lshape2_mesh, nodes=[0])


def test_project_out_v(lshape2_mesh, rng):
    mesh = lshape2_mesh
    F = rng.standard_normal((len(mesh), 2, 2))
    P = project_out_v(F, mesh, origin=np.zeros(2))
    gens = v_generators(mesh.x, np.zeros(2))
    pair = [np.dot(mesh.w, frob(P, g)) for g in gens]
    assert np.abs(pair).max() < 1e-11 * np.dot(mesh.w, np.abs(F).sum((1, 2)))


def test_truncation(lshape2_mesh, rng):
    mesh = lshape2_mesh
    F = rng.standard_normal((len(mesh), 2, 2))
    h = split_W_plus_V(F, orthonormalize_v_basis(mesh), mesh).h
    Q = mesh.tree.root
    res = truncate_to_W0(h, mesh, 0.5, Q)
    assert res.tail_norm < 0.5
    assert res.error <= res.bound * (1 + 1e-10)
    assert res.residual < 1e-11
    with pytest.raises(TruncationError):
        truncate_to_W0(h, mesh, 1e-300, Q, cube_order=[Q])
    with pytest.raises(ValueError):
        truncate_to_W0(h, mesh, 0.0, Q)


def test_theta_duality(lshape3_mesh):
    mesh = lshape3_mesh
    d = theta_duality(mesh, mesh.cover.center[mesh.tree.root])
    assert d["theta_H_delta"] <= 1e-11
    assert d["theta_A_zero"] <= 1e-11


def test_fraction_sigma_values():
    s = sigma_basis(2)[-1]          # b = e_2 at anchor 0
    v = s.as_poly()
    assert v[0](np.array([1.0, 2.0])) == pytest.approx(2.0)
    assert v[1](np.array([1.0, 2.0])) == pytest.approx(4 - 2.5)
    assert v[1].terms.get((2, 0), 0) == Fraction(-1, 2)
