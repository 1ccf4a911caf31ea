"""Independent oracles shared by the unit and acceptance tests."""
import itertools
from fractions import Fraction

import numpy as np

from korn_lab.fields import build_quadrature
from korn_lab.geometry import DyadicGrid
from korn_lab.tree import build_overlap_cubes, build_tree
from korn_lab.whitney import WhitneyCover


def small_mesh(index, root_hint=None):
    grid = DyadicGrid(origin=np.zeros(2), scale=1.0)
    cov = WhitneyCover.from_cubes(grid, [0] * len(index), index)
    tree = build_tree(cov, root_hint=root_hint)
    return build_quadrature(tree, build_overlap_cubes(tree), 1)


def enumerate_averages(mesh, coef, step=Fraction(1, 16)):
    """Shadow averages of g = sum_k coef_k chi_{Omega_k} by counting cells of
    a uniform grid (every extended-cube face lies on it)."""
    cov, tree = mesh.cover, mesh.tree
    olo, ohi = cov.omega_bounds()
    lo = [Fraction(v).limit_denominator(64) for v in olo.min(0)]
    hi = [Fraction(v).limit_denominator(64) for v in ohi.max(0)]
    counts = [int((h - l) / step) for l, h in zip(lo, hi)]
    olo_f = [[Fraction(v).limit_denominator(64) for v in r] for r in olo]
    ohi_f = [[Fraction(v).limit_denominator(64) for v in r] for r in ohi]
    T = len(cov)
    subtree = [[s for s in range(T) if tree.is_descendant(np.array([s]), t)[0]] for t in range(T)]
    num = [Fraction(0)] * T
    den = [0] * T
    for idx in itertools.product(*[range(c) for c in counts]):
        mid = [l + (i + Fraction(1, 2)) * step for l, i in zip(lo, idx)]
        inside = [all(a < m < b for a, m, b in zip(olo_f[k], mid, ohi_f[k])) for k in range(T)]
        if not any(inside):
            continue
        g = sum((coef[k] for k in range(T) if inside[k]), Fraction(0))
        for t in range(T):
            if any(inside[s] for s in subtree[t]):
                num[t] += abs(g)
                den[t] += 1
    avg = [num[t] / den[t] for t in range(T)]
    avg[tree.root] = Fraction(0)
    return avg


def nodal_g(mesh, coef):
    olo, ohi = mesh.cover.omega_bounds()
    g = np.array([Fraction(0)] * len(mesh), dtype=object)
    for k, c in enumerate(coef):
        inside = np.all((mesh.x > olo[k]) & (mesh.x < ohi[k]), 1)
        g[inside] += c
    return g
