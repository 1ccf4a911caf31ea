from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from korn_lab.conformal import v_generators
from korn_lab.decompose import (NotInW0Error, bump_profile, family_sum, hardy_adjoint, hardy_apply,
                                hardy_norm_estimate, partition_of_unity, random_w0_field,
                                v_decompose, w0_residuals)
from korn_lab.fields import frob
from oracles import enumerate_averages, nodal_g, small_mesh


def test_hardy_three_node_exact():
    mesh = small_mesh([[0, 0], [1, 0], [2, 0]])
    assert mesh.tree.root == 0
    g = nodal_g(mesh, [Fraction(0), Fraction(0), Fraction(1)])
    Tg, avg = hardy_apply(mesh, g, weights=mesh.weights_exact())
    assert list(avg) == [0, Fraction(9, 17), 1]
    assert list(avg) == enumerate_averages(mesh, [0, 0, 1])
    nb = mesh.node_b
    assert all(Tg[i] == (avg[nb[i]] if nb[i] >= 0 else 0) for i in range(len(mesh)))


@pytest.mark.parametrize("root_hint", [[1.5, 1.5], [0.5, 1.5]])
def test_hardy_five_node_cross_exact(root_hint):
    mesh = small_mesh([[1, 1], [0, 1], [2, 1], [1, 0], [1, 2]], root_hint=root_hint)
    coef = [Fraction(3), Fraction(-1, 2), Fraction(2), Fraction(0), Fraction(5, 7)]
    g = nodal_g(mesh, coef)
    Tg, avg = hardy_apply(mesh, g, weights=mesh.weights_exact())
    assert list(avg) == enumerate_averages(mesh, coef)
    # Tg is the average of the overlap cube containing the node
    ov = mesh.overlaps
    for i in range(len(mesh)):
        owners = [t for t in ov.nodes if np.all((mesh.x[i] > ov.lo[t]) & (mesh.x[i] < ov.hi[t]))]
        assert len(owners) <= 1
        assert Tg[i] == (avg[owners[0]] if owners else 0)


def test_hardy_adjoint(lshape2_mesh, rng):
    mesh = lshape2_mesh
    g = rng.random(len(mesh))
    z = rng.random(len(mesh))
    Tg, _ = hardy_apply(mesh, g)
    lhs = np.dot(Tg, z)
    rhs = np.dot(g, hardy_adjoint(mesh, z))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_hardy_norm_finite(lshape2_mesh):
    rep = hardy_norm_estimate(lshape2_mesh, 2.0, 0.0, trials=100)
    assert rep.random_finite
    assert 0 < rep.lower_bound < np.inf
    assert rep.lower_bound >= rep.random_max


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2))
def test_bump_profile(r):
    b = bump_profile(np.array([r]))[0]
    assert 0.0 <= b <= 1.0
    if abs(r) <= 7 / 16:
        assert b == 1.0
    if abs(r) >= 9 / 16:
        assert b == 0.0


def test_partition_of_unity(lshape3_mesh):
    pou = partition_of_unity(lshape3_mesh)
    assert np.abs(pou.node_sum() - 1).max() < 1e-14
    assert pou.phi.min() >= 0


def test_v_decomposition_audits(lshape3_mesh, rng):
    mesh = lshape3_mesh
    pou = partition_of_unity(mesh)
    origin = mesh.cover.center[mesh.tree.root]
    for _ in range(3):
        g = random_w0_field(mesh, rng, origin=origin)
        dec = v_decompose(mesh, g, pou, origin)
        a = dec.audits
        assert a["reconstruction"] < 1e-10
        assert a["support_violations"] == 0
        assert a["orthogonality"] < 1e-9
        assert a["P11_violations"] == 0
        assert a["P11_equal_f"]
        assert a["localization_nonzero"] == 0
        assert a["P12_rigorous_violation"] <= 1e-12
        assert a["telescoping"] < 1e-10
        for q in (1.5, 2.0, 3.0):
            assert np.isfinite(dec.ratio(q)) and dec.ratio(q) > 0
        assert np.abs(family_sum(mesh, dec.gt) - g).max() <= 1e-10 * np.abs(g).max()


def test_components_orthogonal_to_v(lshape3_mesh, rng):
    mesh = lshape3_mesh
    origin = mesh.cover.center[mesh.tree.root]
    g = random_w0_field(mesh, rng, origin=origin)
    dec = v_decompose(mesh, g, origin=origin, audit=False)
    for t in rng.choice(len(mesh.cover), 20, replace=False):
        nodes, gt = dec.component(t)
        if len(nodes) == 0 or not np.any(gt):
            continue
        gens = v_generators(mesh.x[nodes], origin)
        pair = np.array([np.dot(mesh.w[nodes], frob(gt, G)) for G in gens])
        scale = np.dot(mesh.w, np.abs(g).sum((1, 2))) * np.abs(gens).max()
        assert np.abs(pair).max() <= 1e-10 * scale


def test_not_in_w0_raises(lshape3_mesh):
    mesh = lshape3_mesh
    g = np.broadcast_to(np.eye(3), (len(mesh), 3, 3)).copy()
    origin = mesh.cover.center[mesh.tree.root]
    assert np.abs(w0_residuals(mesh, g, origin)).max() > 1e-3
    with pytest.raises(NotInW0Error):
        v_decompose(mesh, g, origin=origin)
