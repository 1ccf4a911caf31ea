import numpy as np
import pytest

from korn_lab.duality import cube_korn_constant, random_quadratic_gradient, verify_duality_chain
from korn_lab.decompose import partition_of_unity


def test_cube_constant_scale_free():
    assert cube_korn_constant(3) == pytest.approx(2.0, rel=1e-10)
    assert cube_korn_constant(2) >= 1.0


@pytest.mark.parametrize("beta", [0.0, 1.0])
def test_chain_holds_on_random_pairs(lshape3_mesh, beta):
    mesh = lshape3_mesh
    pou = partition_of_unity(mesh)
    rng = np.random.default_rng(7)
    for _ in range(2):
        ch = verify_duality_chain(mesh, beta, rng, pou=pou)
        assert ch.ok, ch.violations
        assert ch.values[3] >= abs(ch.values[2]) - 1e-12
        assert ch.constants["C1"] >= 1.0
        assert ch.constants["M"] >= 1


def test_zero_field_gives_zero_links(lshape3_mesh):
    mesh = lshape3_mesh
    ch = verify_duality_chain(mesh, 0.0, np.random.default_rng(0), Du=np.zeros((len(mesh), 3, 3)))
    assert ch.ok
    assert all(abs(v) == 0 for v in ch.values)


def test_quadratic_gradient_orthogonal_to_v(lshape3_mesh):
    from korn_lab.conformal import v_generators
    from korn_lab.fields import frob
    mesh = lshape3_mesh
    origin = mesh.cover.center[mesh.tree.root]
    Du, lu = random_quadratic_gradient(mesh, np.random.default_rng(1), 0.0, origin)
    gens = v_generators(mesh.x, origin)
    pair = np.array([np.dot(mesh.w, frob(Du, g)) for g in gens])
    assert np.abs(pair).max() <= 1e-10 * np.dot(mesh.w, np.abs(Du).sum((1, 2))) * np.abs(gens).max()
