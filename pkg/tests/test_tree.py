import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from korn_lab.geometry import DyadicGrid, koch_prefractal2d, l_shape
from korn_lab.tree import (TreeError, build_overlap_cubes, build_tree, contained_in_dilate,
                           shadow_constant)
from korn_lab.whitney import WhitneyCover, whitney_decompose


@pytest.fixture(scope="module")
def ltree():
    return build_tree(whitney_decompose(l_shape(2), 5))


def brute_descendants(parent, t):
    out = []
    for s in range(len(parent)):
        u = s
        while u >= 0:
            if u == t:
                out.append(s)
                break
            u = parent[u]
    return np.array(out)


def test_tree_edges_are_full_face(ltree):
    cov = ltree.cover
    ff = {tuple(sorted(e)) for e, f in zip(cov.edges, cov.full_face) if f}
    for s, p in ltree.edges:
        assert tuple(sorted((int(s), int(p)))) in ff
    assert np.sum(ltree.parent < 0) == 1


def test_bfs_depth_is_graph_distance(ltree):
    cov = ltree.cover
    indptr, nbr = cov.adjacency(full_face_only=True)
    for t in range(len(cov)):
        if t == ltree.root:
            continue
        # some full-face neighbour is one level closer, none is two closer
        d = ltree.depth[nbr[indptr[t]:indptr[t + 1]]]
        assert d.min() == ltree.depth[t] - 1


def test_subtree_and_path_sums_against_brute(ltree, rng):
    v = rng.standard_normal(len(ltree))
    sub = ltree.subtree_sum(v)
    path = ltree.root_path_sum(v)
    for t in rng.choice(len(ltree), 20, replace=False):
        assert sub[t] == pytest.approx(v[brute_descendants(ltree.parent, t)].sum())
        u, acc = t, 0.0
        while u >= 0:
            acc += v[u]
            u = ltree.parent[u]
        assert path[t] == pytest.approx(acc)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(0, 10 ** 6))
def test_lca_against_ancestor_sets(a, b):
    tree = build_tree(whitney_decompose(l_shape(2), 4))
    a %= len(tree)
    b %= len(tree)

    def anc(u):
        out = []
        while u >= 0:
            out.append(u)
            u = tree.parent[u]
        return out
    common = [u for u in anc(a) if u in set(anc(b))]
    assert int(tree.lca(np.array([a]), np.array([b]))[0]) == common[0]


def test_shadow_constant_against_brute(ltree):
    sc = shadow_constant(ltree)
    cov = ltree.cover
    for t in range(0, len(cov), 7):
        ds = brute_descendants(ltree.parent, t)
        c = cov.center[t]
        k = np.max(np.maximum(c - cov.lo[ds], cov.hi[ds] - c)) / (0.5 * cov.side[t])
        assert sc.per_node[t] == pytest.approx(k)
    assert contained_in_dilate(cov, [sc.argmax_s], [sc.argmax_t], sc.K).all()
    assert not contained_in_dilate(cov, [sc.argmax_s], [sc.argmax_t], 0.999 * sc.K).any()


@pytest.mark.parametrize("domain", [l_shape(2), koch_prefractal2d(3)])
def test_overlap_cubes_disjoint_and_inside(domain):
    tree = build_tree(whitney_decompose(domain, 6))
    oc = build_overlap_cubes(tree)
    assert oc.check_disjoint()
    assert oc.check_inside_omegas()
    assert np.all(oc.side_units[oc.nodes] > 0)


def test_overlap_cubes_brute_disjoint(ltree):
    oc = build_overlap_cubes(ltree)
    t = oc.nodes
    lo, hi = oc.lo[t], oc.hi[t]
    ov = np.all(np.minimum(hi[:, None], hi[None]) - np.maximum(lo[:, None], lo[None]) > 0, -1)
    np.fill_diagonal(ov, False)
    assert not ov.any()


def test_disconnected_cover_raises():
    g = DyadicGrid(origin=(0.0, 0.0), scale=1.0)
    c = WhitneyCover.from_cubes(g, [0, 0], [[0, 0], [2, 0]])
    with pytest.raises(TreeError, match="disconnected"):
        build_tree(c)


def test_root_hint(ltree):
    tree = build_tree(ltree.cover, root_hint=[0.1, 0.1])
    cov = ltree.cover
    r = tree.root
    assert np.all(cov.lo[r] <= 0.1) and np.all(cov.hi[r] >= 0.1)
