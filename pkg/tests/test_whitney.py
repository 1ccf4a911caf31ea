import itertools

import numpy as np
import pytest

from korn_lab.geometry import DyadicGrid, axis_box, cusp3d, l_shape
from korn_lab.whitney import (EmptyCoverError, WhitneyCover, audit_cover, disjoint_interiors,
                              sample_covered, whitney_decompose)


@pytest.fixture(scope="module")
def lcover():
    return whitney_decompose(l_shape(2), 6)


def test_audit_passes_on_lshape(lcover, rng):
    checks = audit_cover(lcover, l_shape(2), rng, samples=2000)
    assert all(c["pass"] for c in checks), checks


def test_sieve_bounds_exactly(lcover):
    dist, inside, _ = l_shape(2).cube_status(lcover.lo, lcover.side)
    assert np.all(inside)
    r = dist / lcover.diam
    assert r.min() >= 1 - 1e-12 and r.max() <= 4 + 1e-12


def test_disjoint_and_volume_bounded(lcover):
    assert disjoint_interiors(lcover)
    assert lcover.volume() < 0.75


def test_brute_pairwise_disjoint(lcover):
    lo, hi = lcover.lo, lcover.hi
    ov = np.all(np.minimum(hi[:, None], hi[None]) - np.maximum(lo[:, None], lo[None]) > 0, -1)
    np.fill_diagonal(ov, False)
    assert not ov.any()


def test_neighbor_pairs_against_brute(lcover):
    lo, hi = lcover.lo, lcover.hi
    gap = np.minimum(hi[:, None], hi[None]) - np.maximum(lo[:, None], lo[None])
    touch = np.all(gap >= -1e-14, -1)
    np.fill_diagonal(touch, False)
    brute = {(i, j) for i, j in zip(*np.nonzero(np.triu(touch)))}
    got = {tuple(e) for e in lcover.edges}
    assert got == brute
    # full face: the contact is (n-1)-dimensional and covers a face of the smaller cube
    for (i, j), f in zip(lcover.edges, lcover.full_face):
        g = gap[i, j]
        zero = np.isclose(g, 0, atol=1e-14)
        small = min(lcover.side[i], lcover.side[j])
        expect = zero.sum() == 1 and np.allclose(g[~zero], small)
        assert bool(f) == bool(expect)


def test_overlap_count_bounded(lcover, rng):
    x = sample_covered(lcover, rng, 5000)
    cnt = lcover.overlap_count(x)
    assert cnt.min() >= 1 and cnt.max() <= 12 ** 2


def test_locate_returns_containing_cube(lcover, rng):
    x = sample_covered(lcover, rng, 500)
    c = lcover.locate(x)
    assert np.all(c >= 0)
    assert np.all((x >= lcover.lo[c]) & (x <= lcover.hi[c]))


def test_lookup_roundtrip(lcover):
    ids = lcover.lookup(lcover.levels, lcover.index)
    assert np.array_equal(ids, np.arange(len(lcover)))
    assert lcover.lookup(np.array([0]), np.array([[5, 5]]))[0] == -1


def test_from_cubes_edges():
    g = DyadicGrid(origin=(0.0, 0.0), scale=1.0)
    c = WhitneyCover.from_cubes(g, [0, 0, 0], [[0, 0], [1, 0], [2, 0]])
    assert sorted(map(tuple, c.edges)) == [(0, 1), (1, 2)]
    assert c.full_face.all()


def test_cube_cover_is_symmetric():
    c = whitney_decompose(axis_box([0, 0], [1, 1]), 6)
    ctr = c.center
    mirrored = {tuple(np.round(v, 12)) for v in np.c_[1 - ctr[:, 0], ctr[:, 1]]}
    assert mirrored == {tuple(np.round(v, 12)) for v in ctr}


def test_too_shallow_cusp_cover_is_an_error():
    with pytest.raises(EmptyCoverError):
        whitney_decompose(cusp3d(2.0), 2)


def test_jsonl_export(lcover):
    lines = lcover.to_jsonl().strip().splitlines()
    assert len(lines) == len(lcover)
    assert '"level"' in lines[0]
