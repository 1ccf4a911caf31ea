"""Rooted BFS trees over Whitney covers, shadows, the shadow constant K and the
overlap cubes B_t.

Notation: ``s >= t`` (s succeeds t) means the root path of s passes through t.
The descendants of t are a contiguous range of a preorder (Euler) numbering,
which makes shadow membership an interval test.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .whitney import WhitneyCover


class TreeError(RuntimeError):
    pass


@dataclass
class RootedTree:
    cover: WhitneyCover
    root: int
    parent: np.ndarray      # -1 at the root
    depth: np.ndarray
    order: np.ndarray       # BFS order
    tin: np.ndarray         # preorder position
    tout: np.ndarray        # one past the last descendant position
    euler: np.ndarray       # node at each preorder position

    def __len__(self):
        return len(self.parent)

    # -- structure ----------------------------------------------------------
    @property
    def edges(self) -> np.ndarray:
        nr = np.flatnonzero(self.parent >= 0)
        return np.stack([self.parent[nr], nr], 1)

    def children(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.parent == t)

    def children_csr(self):
        if not hasattr(self, "_children"):
            nr = np.flatnonzero(self.parent >= 0)
            p = self.parent[nr]
            o = np.lexsort((nr, p))
            indptr = np.zeros(len(self) + 1, dtype=np.int64)
            np.add.at(indptr, p + 1, 1)
            self._children = (np.cumsum(indptr), nr[o])
        return self._children

    def is_descendant(self, s, t) -> np.ndarray:
        """Vectorized test s >= t."""
        s = np.asarray(s)
        t = np.asarray(t)
        return (self.tin[t] <= self.tin[s]) & (self.tin[s] < self.tout[t])

    def descendants(self, t: int) -> np.ndarray:
        """Sorted index set {s : s >= t}."""
        return np.sort(self.euler[self.tin[t]:self.tout[t]])

    def by_depth(self):
        if not hasattr(self, "_levels"):
            o = np.argsort(self.depth, kind="stable")
            cuts = np.searchsorted(self.depth[o], np.arange(self.depth.max() + 2))
            self._levels = [o[cuts[d]:cuts[d + 1]] for d in range(self.depth.max() + 1)]
        return self._levels

    def subtree_sum(self, values: np.ndarray) -> np.ndarray:
        """S_t = sum_{s >= t} values_s (post-order accumulation)."""
        out = np.array(values, copy=True)
        for nodes in reversed(self.by_depth()[1:]):
            np.add.at(out, self.parent[nodes], out[nodes])
        return out

    def root_path_sum(self, values: np.ndarray) -> np.ndarray:
        """P_s = sum_{t <= s} values_t (sum along the root path)."""
        out = np.array(values, copy=True)
        for nodes in self.by_depth()[1:]:
            out[nodes] += out[self.parent[nodes]]
        return out

    # -- lowest common ancestors -------------------------------------------
    def _lift(self):
        if not hasattr(self, "_up"):
            m = len(self)
            p = np.where(self.parent >= 0, self.parent, self.root)
            up = [p]
            span = 1
            while span < max(int(self.depth.max()), 1):
                up.append(up[-1][up[-1]])
                span *= 2
            self._up = up
        return self._up

    def lca(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64).copy()
        b = np.asarray(b, dtype=np.int64).copy()
        up = self._lift()
        swap = self.depth[a] < self.depth[b]
        a[swap], b[swap] = b[swap], a[swap].copy()
        diff = self.depth[a] - self.depth[b]
        for k, u in enumerate(up):
            sel = (diff >> k) & 1 == 1
            a[sel] = u[a[sel]]
        for u in reversed(up):
            sel = u[a] != u[b]
            a[sel] = u[a[sel]]
            b[sel] = u[b[sel]]
        return np.where(a == b, a, up[0][a])

    def to_csv(self) -> str:
        rows = ["t,parent,level,depth"]
        for t in range(len(self)):
            rows.append(f"{t},{self.parent[t]},{self.cover.levels[t]},{self.depth[t]}")
        return "\n".join(rows) + "\n"


def build_tree(cover: WhitneyCover, root_hint=None) -> RootedTree:
    """BFS tree over full-face edges from the root cube.

    The root is the cube containing ``root_hint`` when given, otherwise the
    largest cube with ties broken by lexicographic index (cube 0 in the
    cover's canonical order).
    """
    m = len(cover)
    if root_hint is not None:
        r = int(cover.locate(np.asarray(root_hint, dtype=float)[None])[0])
        if r < 0:
            raise TreeError("root hint is not in the covered region")
    else:
        r = 0
    indptr, nbr = cover.adjacency(full_face_only=True)
    parent = np.full(m, -2, dtype=np.int64)
    parent[r] = -1
    order = [r]
    q = deque([r])
    while q:
        t = q.popleft()
        for s in nbr[indptr[t]:indptr[t + 1]]:
            if parent[s] == -2:
                parent[s] = t
                order.append(int(s))
                q.append(int(s))
    if len(order) != m:
        miss = np.flatnonzero(parent == -2)
        comps = _components(cover, miss)
        raise TreeError(f"full-face graph is disconnected: root component has {len(order)} cubes; "
                        f"other components (size, first cube): {comps[:10]}")
    order = np.array(order, dtype=np.int64)
    depth = np.zeros(m, dtype=np.int64)
    for t in order[1:]:
        depth[t] = depth[parent[t]] + 1
    # preorder numbering (children visited in increasing id)
    nr = np.flatnonzero(parent >= 0)
    co = np.lexsort((nr, parent[nr]))
    kids_ptr = np.zeros(m + 1, dtype=np.int64)
    np.add.at(kids_ptr, parent[nr] + 1, 1)
    kids_ptr = np.cumsum(kids_ptr)
    kids = nr[co]
    tin = np.zeros(m, dtype=np.int64)
    tout = np.zeros(m, dtype=np.int64)
    euler = np.zeros(m, dtype=np.int64)
    stack = [(r, 0)]
    pos = 0
    while stack:
        t, state = stack.pop()
        if state == 0:
            tin[t] = pos
            euler[pos] = t
            pos += 1
            stack.append((t, 1))
            ch = kids[kids_ptr[t]:kids_ptr[t + 1]]
            for s in ch[::-1]:
                stack.append((int(s), 0))
        else:
            tout[t] = pos
    return RootedTree(cover=cover, root=r, parent=parent, depth=depth, order=order,
                      tin=tin, tout=tout, euler=euler)


def _components(cover, nodes):
    indptr, nbr = cover.adjacency(full_face_only=True)
    left = set(int(v) for v in nodes)
    comps = []
    while left:
        s = min(left)
        seen = {s}
        st = [s]
        while st:
            t = st.pop()
            for u in nbr[indptr[t]:indptr[t + 1]]:
                u = int(u)
                if u in left and u not in seen:
                    seen.add(u)
                    st.append(u)
        left -= seen
        comps.append((len(seen), s))
    return comps


def subtree_bbox(tree: RootedTree):
    """Bounding box of the union of Q_s over s >= t, for every t."""
    lo = tree.cover.lo.copy()
    hi = tree.cover.hi.copy()
    for nodes in reversed(tree.by_depth()[1:]):
        np.minimum.at(lo, tree.parent[nodes], lo[nodes])
        np.maximum.at(hi, tree.parent[nodes], hi[nodes])
    return lo, hi


@dataclass
class ShadowConstant:
    K: float
    per_node: np.ndarray
    argmax_t: int
    argmax_s: int


def shadow_constant(tree: RootedTree) -> ShadowConstant:
    """Minimal K with Q_s inside K Q_t (dilation about the center of Q_t)
    for all s >= t.  Exact for dyadic coordinates."""
    cov = tree.cover
    lo, hi = subtree_bbox(tree)
    c = cov.center
    half = 0.5 * cov.side[:, None]
    k_t = np.maximum(c - lo, hi - c).max(1) / half[:, 0]
    t = int(np.argmax(k_t))
    # locate a descendant realizing the bound
    ds = tree.descendants(t)
    kk = np.maximum(c[t] - cov.lo[ds], cov.hi[ds] - c[t]).max(1) / half[t, 0]
    s = int(ds[np.argmax(kk)])
    return ShadowConstant(K=float(k_t.max()), per_node=k_t, argmax_t=t, argmax_s=s)


def contained_in_dilate(cover: WhitneyCover, s, t, K: float) -> np.ndarray:
    """Vectorized test Q_s inside K Q_t."""
    s = np.asarray(s)
    t = np.asarray(t)
    c = cover.center[t]
    h = 0.5 * K * cover.side[t][:, None]
    return np.all((cover.lo[s] >= c - h) & (cover.hi[s] <= c + h), 1)


@dataclass
class OverlapCubes:
    """Open cubes B_t for every non-root t, in exact integer units.

    ``unit_level`` fixes the unit length scale * 2^-unit_level; ``lo_units``
    and ``side_units`` are integers.  Entries for the root are unused.
    """

    tree: RootedTree
    unit_level: int
    lo_units: np.ndarray
    side_units: np.ndarray
    halvings: np.ndarray

    @property
    def unit(self) -> float:
        return self.tree.cover.grid.scale * 2.0 ** (-self.unit_level)

    @property
    def nodes(self) -> np.ndarray:
        return np.flatnonzero(self.tree.parent >= 0)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.tree.cover.grid.origin) + self.unit * self.lo_units

    @property
    def side(self) -> np.ndarray:
        return self.unit * self.side_units

    @property
    def hi(self) -> np.ndarray:
        return self.lo + self.side[:, None]

    @property
    def center(self) -> np.ndarray:
        return self.lo + 0.5 * self.side[:, None]

    def volume(self) -> np.ndarray:
        v = self.side ** self.tree.cover.n
        v[self.tree.root] = 0.0
        return v

    def volume_ratio(self) -> np.ndarray:
        cov = self.tree.cover
        r = (9.0 / 8.0 * cov.side) ** cov.n / np.where(self.side > 0, self.side, np.inf) ** cov.n
        r[self.tree.root] = 0.0
        return r

    def omega_units(self):
        """Extended cubes in the same integer units (lo, hi)."""
        cov = self.tree.cover
        sh = self.unit_level - cov.levels
        lo = cov.index << sh[:, None]
        sz = np.int64(1) << sh
        ext = sz >> 4  # side/16
        return lo - ext[:, None], lo + sz[:, None] + ext[:, None]

    def check_disjoint(self) -> bool:
        return not np.any(_overlapping(self))

    def check_inside_omegas(self) -> bool:
        olo, ohi = self.omega_units()
        t = self.nodes
        p = self.tree.parent[t]
        blo = self.lo_units[t]
        bhi = blo + self.side_units[t][:, None]
        ok = np.all((blo >= olo[t]) & (bhi <= ohi[t]) & (blo >= olo[p]) & (bhi <= ohi[p]), 1)
        return bool(np.all(ok))


def _overlapping(oc: OverlapCubes) -> np.ndarray:
    """Boolean mask of B cubes that overlap another B cube (open sets).

    B_t lies in the closed union of Q_t and Q_{t_p}, and Whitney cubes have
    disjoint interiors, so only parent/child and sibling pairs can meet.
    """
    tree = oc.tree
    root = tree.root
    t = np.flatnonzero(tree.parent >= 0)
    pc = np.stack([t, tree.parent[t]], 1)
    indptr, kids = tree.children_csr()
    sib = []
    for p in np.flatnonzero(np.diff(indptr) > 1):
        ch = kids[indptr[p]:indptr[p + 1]]
        i, j = np.triu_indices(len(ch), 1)
        sib.append(np.stack([ch[i], ch[j]], 1))
    e = np.concatenate([pc] + sib) if sib else pc
    e = e[(e[:, 0] != root) & (e[:, 1] != root)]
    a, b = e[:, 0], e[:, 1]
    alo, blo = oc.lo_units[a], oc.lo_units[b]
    ahi = alo + oc.side_units[a][:, None]
    bhi = blo + oc.side_units[b][:, None]
    ov = np.all((np.minimum(ahi, bhi) - np.maximum(alo, blo)) > 0, 1)
    bad = np.zeros(len(tree), dtype=bool)
    bad[a[ov]] = True
    bad[b[ov]] = True
    return bad


def build_overlap_cubes(tree: RootedTree, max_halvings: int = 8) -> OverlapCubes:
    """B_t centered at the centroid of the shared face, side min(side)/8,
    halved where needed until all B cubes are pairwise disjoint."""
    cov = tree.cover
    n = cov.n
    U = int(cov.levels.max()) + 4 + max_halvings
    m = len(cov)
    lo_u = np.zeros((m, n), dtype=np.int64)
    side_u = np.zeros(m, dtype=np.int64)
    t = np.flatnonzero(tree.parent >= 0)
    p = tree.parent[t]
    small = np.where(cov.levels[t] >= cov.levels[p], t, p)
    big = np.where(small == t, p, t)
    ls = cov.levels[small]
    sh = U - ls
    slo = cov.index[small] << sh[:, None]
    ssz = np.int64(1) << sh
    bsh = U - cov.levels[big]
    blo = cov.index[big] << bsh[:, None]
    bhi = blo + (np.int64(1) << bsh)[:, None]
    shi = slo + ssz[:, None]
    center = slo + (ssz >> 1)[:, None]
    # touching axis: the small cube's face lies on the big cube's boundary plane
    on_lo = shi == blo
    on_hi = slo == bhi
    axis_mask = on_lo | on_hi
    if not np.all(axis_mask.sum(1) == 1):
        raise RuntimeError("tree edge is not a full-face contact")
    face = np.where(on_lo, shi, slo)
    center = np.where(axis_mask, face, center)
    half = ssz >> 4                      # initial side = small side / 8
    halv = np.zeros(m, dtype=np.int64)
    side_u[t] = 2 * half
    lo_u[t] = center - half[:, None]
    cen = np.zeros((m, n), dtype=np.int64)
    cen[t] = center
    oc = OverlapCubes(tree=tree, unit_level=U, lo_units=lo_u, side_units=side_u, halvings=halv)
    for _ in range(max_halvings + 1):
        bad = _overlapping(oc)
        if not np.any(bad):
            return oc
        idx = np.flatnonzero(bad)
        if np.any(oc.halvings[idx] >= max_halvings):
            break
        oc.side_units[idx] >>= 1
        oc.halvings[idx] += 1
        oc.lo_units[idx] = cen[idx] - (oc.side_units[idx] >> 1)[:, None]
    raise RuntimeError("could not make the overlap cubes disjoint within the halving budget")
