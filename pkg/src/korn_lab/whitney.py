"""Whitney cube covers, their neighbor graph and the extended cubes 9/8 Q.

Cubes live on the dyadic grid of :class:`korn_lab.geometry.DyadicGrid` and are
stored as integer (level, index) pairs, so all combinatorial tests (disjoint
interiors, face contact) are exact integer arithmetic.

Sieve
-----
Starting from the level-0 cube that contains the bounding box, a cube is

* accepted when it lies inside the domain and ``dist(Q, boundary) >= diam(Q)``,
* dropped when its interior misses the domain,
* split into its 2^n children otherwise (or discarded at ``max_level``).

A split cube either meets the complement or satisfies ``dist < 2 diam(child)``,
so every accepted child has ``dist < diam(parent) + dist(parent) < 4 diam``.
Touching cubes then have diameters within a factor 4, i.e. levels differing
by at most 2.  Every point with ``rho(x) >= 2 sqrt(n) scale 2^-max_level`` is
covered.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import Domain, DyadicGrid

EXTENSION = 9.0 / 8.0


class EmptyCoverError(RuntimeError):
    pass


def _pack(levels, index, bits):
    levels = np.asarray(levels, dtype=np.int64)
    index = np.asarray(index, dtype=np.int64)
    key = levels << np.int64(58)
    for i in range(index.shape[1]):
        key = key | (index[:, i] << np.int64(i * bits))
    return key


@dataclass
class WhitneyCover:
    """A (possibly truncated) Whitney cover.

    Attributes
    ----------
    grid : DyadicGrid
    levels : (N,) int array
    index : (N, n) int array
    max_level : truncation depth
    edges : (E, 2) int array of neighbor pairs i < j (closed cubes meet)
    full_face : (E,) bool, True for (n-1)-neighbors
    """

    grid: DyadicGrid
    levels: np.ndarray
    index: np.ndarray
    max_level: int
    domain: Domain | None = None
    dist: np.ndarray | None = None
    stats: dict = field(default_factory=dict)
    edges: np.ndarray | None = None
    full_face: np.ndarray | None = None

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=np.int64)
        self.index = np.asarray(self.index, dtype=np.int64).reshape(len(self.levels), -1)
        order = np.lexsort(tuple(self.index[:, ::-1].T) + (self.levels,))
        self.levels = self.levels[order]
        self.index = self.index[order]
        if self.dist is not None:
            self.dist = np.asarray(self.dist)[order]
        self._bits = int(max(self.max_level, int(self.levels.max(initial=0)),
                             int(self.index.max(initial=0)).bit_length()) + 1)
        self._keys = _pack(self.levels, self.index, self._bits)
        self._key_order = np.argsort(self._keys)
        self._sorted_keys = self._keys[self._key_order]
        if self.edges is None:
            self.edges, self.full_face = _neighbor_pairs(self)
        self._adj = None

    # -- construction ------------------------------------------------------
    @classmethod
    def from_cubes(cls, grid: DyadicGrid, levels, index, domain: Domain | None = None,
                   max_level: int | None = None) -> "WhitneyCover":
        """Build a cover from an explicit cube list (no sieve checks).  Used for
        small synthetic configurations."""
        levels = np.asarray(levels, dtype=np.int64)
        ml = int(levels.max()) if max_level is None else max_level
        return cls(grid=grid, levels=levels, index=np.asarray(index), max_level=ml, domain=domain)

    # -- geometry ----------------------------------------------------------
    @property
    def n(self) -> int:
        return self.index.shape[1]

    def __len__(self):
        return len(self.levels)

    @property
    def side(self) -> np.ndarray:
        return self.grid.side(self.levels)

    @property
    def lo(self) -> np.ndarray:
        return self.grid.lower(self.levels, self.index)

    @property
    def hi(self) -> np.ndarray:
        return self.lo + self.side[:, None]

    @property
    def center(self) -> np.ndarray:
        return self.lo + 0.5 * self.side[:, None]

    @property
    def diam(self) -> np.ndarray:
        return math.sqrt(self.n) * self.side

    def omega_bounds(self):
        """Open extended cubes (9/8) Q_t as (lo, hi)."""
        c = self.center
        h = 0.5 * EXTENSION * self.side[:, None]
        return c - h, c + h

    def volume(self) -> float:
        return float(np.sum(self.side ** self.n))

    def coverage_constant(self) -> float:
        """c with {rho >= c 2^-max_level} contained in the union of cubes."""
        return 2.0 * math.sqrt(self.n) * self.grid.scale

    # -- lookup ------------------------------------------------------------
    def lookup(self, levels, index) -> np.ndarray:
        """Cube ids for (level, index) pairs, -1 where absent."""
        levels = np.asarray(levels, dtype=np.int64)
        index = np.asarray(index, dtype=np.int64)
        ok = (levels >= 0) & (levels <= self._bits - 1) & np.all(index >= 0, 1) \
            & np.all(index < (np.int64(1) << np.int64(self._bits)), 1)
        out = np.full(len(levels), -1, dtype=np.int64)
        if not np.any(ok):
            return out
        k = _pack(levels[ok], index[ok], self._bits)
        pos = np.searchsorted(self._sorted_keys, k)
        pos = np.minimum(pos, len(self._sorted_keys) - 1)
        hit = self._sorted_keys[pos] == k
        res = np.where(hit, self._key_order[pos], -1)
        out[ok] = res
        return out

    def locate(self, x) -> np.ndarray:
        """Id of a cube containing each point (closed cubes), -1 if none."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(x), -1, dtype=np.int64)
        origin = np.asarray(self.grid.origin)
        for lv in np.unique(self.levels):
            todo = out < 0
            if not np.any(todo):
                break
            s = self.grid.side(lv)
            rel = (x[todo] - origin) / s
            base = np.floor(rel).astype(np.int64)
            found = np.full(todo.sum(), -1, dtype=np.int64)
            # points on cube faces: also try the lower neighbor index
            for shift in itertools.product((0, 1), repeat=self.n):
                sh = np.array(shift)
                cand = base - sh * (rel == base)
                need = found < 0
                if not np.any(need):
                    break
                ids = self.lookup(np.full(need.sum(), lv), cand[need])
                f = found[need]
                f[ids >= 0] = ids[ids >= 0]
                found[need] = f
            tmp = out[todo]
            tmp[found >= 0] = found[found >= 0]
            out[todo] = tmp
        return out

    # -- graph ---------------------------------------------------------------
    def adjacency(self, full_face_only: bool = False):
        """CSR adjacency (indptr, indices)."""
        key = bool(full_face_only)
        if self._adj is None:
            self._adj = {}
        if key not in self._adj:
            e = self.edges if not key else self.edges[self.full_face]
            m = len(self)
            a = np.concatenate([e[:, 0], e[:, 1]])
            b = np.concatenate([e[:, 1], e[:, 0]])
            order = np.lexsort((b, a))
            a, b = a[order], b[order]
            indptr = np.zeros(m + 1, dtype=np.int64)
            np.add.at(indptr, a + 1, 1)
            indptr = np.cumsum(indptr)
            self._adj[key] = (indptr, b)
        return self._adj[key]

    def degrees(self) -> np.ndarray:
        indptr, _ = self.adjacency()
        return np.diff(indptr)

    def overlap_count(self, x, warn: bool = True) -> np.ndarray:
        """Number of extended cubes containing each point (0 outside the cover)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cid = self.locate(x)
        counts = np.zeros(len(x), dtype=np.int64)
        if warn and np.any(cid < 0):
            warnings.warn(f"{int(np.sum(cid < 0))} point(s) outside the covered region", stacklevel=2)
        indptr, nbr = self.adjacency()
        olo, ohi = self.omega_bounds()
        for i in np.flatnonzero(cid >= 0):
            t = cid[i]
            cand = np.concatenate([[t], nbr[indptr[t]:indptr[t + 1]]])
            counts[i] = np.sum(np.all((x[i] > olo[cand]) & (x[i] < ohi[cand]), 1))
        return counts

    def omega_members(self, x, cid=None):
        """Pairs (point, cube) with x in the open extended cube.

        Uses the fact that extended cubes only reach neighbors.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if cid is None:
            cid = self.locate(x)
        indptr, nbr = self.adjacency()
        olo, ohi = self.omega_bounds()
        deg = np.diff(indptr)
        ok = cid >= 0
        pts = np.flatnonzero(ok)
        c = cid[ok]
        # self + neighbors, flattened
        reps = deg[c] + 1
        p_rep = np.repeat(pts, reps)
        starts = np.repeat(indptr[c], reps)
        offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
        cand = np.where(offs == 0, np.repeat(c, reps), nbr[np.minimum(starts + offs - 1, len(nbr) - 1)])
        inside = np.all((x[p_rep] > olo[cand]) & (x[p_rep] < ohi[cand]), 1)
        return p_rep[inside], cand[inside]

    # -- export --------------------------------------------------------------
    def to_jsonl(self) -> str:
        lines = []
        for i in range(len(self)):
            rec = {"level": int(self.levels[i]), "index": [int(v) for v in self.index[i]],
                   "accepted_at": int(self.levels[i])}
            if self.dist is not None:
                rec["dist"] = float(self.dist[i])
            lines.append(json.dumps(rec))
        return "\n".join(lines) + "\n"

    def edges_csv(self) -> str:
        rows = ["i,j,full_face"]
        for (i, j), f in zip(self.edges, self.full_face):
            rows.append(f"{i},{j},{int(f)}")
        return "\n".join(rows) + "\n"


def whitney_decompose(domain: Domain, max_level: int) -> WhitneyCover:
    """Dyadic sieve; see the module docstring for the acceptance rule."""
    if max_level < 2:
        raise ValueError("max_level must be at least 2")
    n = domain.n
    grid = DyadicGrid.for_domain(domain)
    origin = np.asarray(grid.origin)
    cand = np.zeros((1, n), dtype=np.int64)
    acc_lv, acc_idx, acc_dist = [], [], []
    truncated = 0
    children = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)
    for lv in range(max_level + 1):
        if len(cand) == 0:
            break
        side = grid.side(lv)
        lo = origin + side * cand
        dist, inside, disjoint = domain.cube_status(lo, side)
        accept = inside & (dist >= math.sqrt(n) * side)
        acc_lv.append(np.full(accept.sum(), lv))
        acc_idx.append(cand[accept])
        acc_dist.append(dist[accept])
        refine = ~accept & ~disjoint
        if lv == max_level:
            truncated = int(refine.sum())
            break
        cand = (2 * cand[refine][:, None, :] + children[None]).reshape(-1, n)
    levels = np.concatenate(acc_lv) if acc_lv else np.zeros(0, dtype=np.int64)
    if len(levels) == 0:
        raise EmptyCoverError("domain too thin to admit a Whitney cube at this max_level")
    cover = WhitneyCover(grid=grid, levels=levels, index=np.concatenate(acc_idx), max_level=max_level,
                         domain=domain, dist=np.concatenate(acc_dist))
    vol = domain_volume(domain)
    cover.stats = {
        "cubes": len(cover),
        "truncated_cells": truncated,
        "covered_volume": cover.volume(),
        "domain_volume": vol,
        "uncovered_volume": None if vol is None else vol - cover.volume(),
        "coverage_constant": cover.coverage_constant(),
    }
    return cover


def domain_volume(domain: Domain) -> float | None:
    from .geometry import BoxUnion, Cusp3D, Polygon2D
    if isinstance(domain, BoxUnion):
        cl, ch = domain.in_lo, domain.in_hi
        return float(np.prod(ch - cl, axis=1).sum())
    if isinstance(domain, Polygon2D):
        v = domain.vertices
        return float(0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))
    if isinstance(domain, Cusp3D):
        return 1.0 / (domain.gamma + 1.0)
    return None


def _neighbor_pairs(cover: WhitneyCover):
    """Enumerate touching cube pairs by probing levels l-2..l+2."""
    n = cover.n
    lv = cover.levels
    idx = cover.index
    pairs = []
    for dl in range(-2, 3):
        if dl >= 0:
            start = (idx << dl) - 1
            span = (1 << dl) + 2
            end = ((idx + 1) << dl)
        else:
            m = -dl
            start = -((-idx) >> m) - 1
            end = (idx + 1) >> m
            span = 3
        tl = lv + dl
        for off in itertools.product(range(span), repeat=n):
            cand = start + np.array(off, dtype=np.int64)
            ok = np.all(cand <= end, 1) & (tl >= 0)
            if not np.any(ok):
                continue
            src = np.flatnonzero(ok)
            ids = cover.lookup(tl[ok], cand[ok])
            hit = (ids >= 0) & (ids != src)
            if np.any(hit):
                pairs.append(np.stack([src[hit], ids[hit]], 1))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=bool)
    p = np.concatenate(pairs)
    p = np.sort(p, axis=1)
    p = np.unique(p, axis=0)
    # exact contact classification at the common fine level
    i, j = p[:, 0], p[:, 1]
    F = np.maximum(lv[i], lv[j])
    ai = idx[i] << (F - lv[i])[:, None]
    bi = (idx[i] + 1) << (F - lv[i])[:, None]
    aj = idx[j] << (F - lv[j])[:, None]
    bj = (idx[j] + 1) << (F - lv[j])[:, None]
    ov = np.minimum(bi, bj) - np.maximum(ai, aj)
    meet = np.all(ov >= 0, 1)
    p, ov = p[meet], ov[meet]
    ai, bi, aj, bj = ai[meet], bi[meet], aj[meet], bj[meet]
    small_is_i = (cover.levels[p[:, 0]] >= cover.levels[p[:, 1]])[:, None]
    sa = np.where(small_is_i, ai, aj)
    sb = np.where(small_is_i, bi, bj)
    la = np.where(small_is_i, aj, ai)
    lb = np.where(small_is_i, bj, bi)
    touching = ov == 0
    contained = (sa >= la) & (sb <= lb)
    full = (touching.sum(1) == 1) & np.all(touching | contained, 1)
    return p, full


def audit_cover(cover: WhitneyCover, domain: Domain, rng: np.random.Generator | None = None,
                samples: int = 10_000) -> list[dict]:
    """Invariant audit; returns check records {name, pass, measured, bound}."""
    checks = []
    n = cover.n
    dist, inside, _ = domain.cube_status(cover.lo, cover.side)
    diam = cover.diam
    tol = 1e-12
    ok_lo = inside & (dist >= diam - tol)
    ok_hi = dist <= 4 * diam + tol
    checks.append({"name": "whitney_sieve_bounds", "pass": bool(np.all(ok_lo & ok_hi)),
                   "measured": float(np.mean(ok_lo & ok_hi)), "bound": 1.0,
                   "ratio_min": float((dist / diam).min()), "ratio_max": float((dist / diam).max())})
    checks.append({"name": "disjoint_interiors", "pass": bool(disjoint_interiors(cover)),
                   "measured": 0 if disjoint_interiors(cover) else 1, "bound": 0})
    dlev = np.abs(cover.levels[cover.edges[:, 0]] - cover.levels[cover.edges[:, 1]]) if len(cover.edges) else np.zeros(1)
    checks.append({"name": "neighbor_level_gap", "pass": bool(dlev.max() <= 2), "measured": int(dlev.max()), "bound": 2})
    deg = cover.degrees()
    checks.append({"name": "neighbor_degree", "pass": bool(deg.max(initial=0) < 12 ** n),
                   "measured": int(deg.max(initial=0)), "bound": 12 ** n})
    if rng is not None and samples:
        x = sample_covered(cover, rng, samples)
        cnt = cover.overlap_count(x)
        checks.append({"name": "overlap_count", "pass": bool(cnt.min() >= 1 and cnt.max() <= 12 ** n),
                       "measured": int(cnt.max()), "bound": 12 ** n, "min": int(cnt.min())})
    return checks


def disjoint_interiors(cover: WhitneyCover) -> bool:
    """Exact check: no cube is an ancestor of another and keys are unique.

    Two dyadic cubes overlap with positive volume iff one contains the other,
    so it suffices to look up every ancestor of every cube.
    """
    if len(np.unique(cover._keys)) != len(cover):
        return False
    lv = cover.levels
    idx = cover.index
    for up in range(1, int(lv.max()) + 1):
        ok = lv - up >= 0
        if not np.any(ok):
            break
        ids = cover.lookup(lv[ok] - up, idx[ok] >> up)
        if np.any(ids >= 0):
            return False
    return True


def sample_covered(cover: WhitneyCover, rng: np.random.Generator, k: int) -> np.ndarray:
    """Uniform samples from the union of cubes."""
    vol = cover.side ** cover.n
    t = rng.choice(len(cover), size=k, p=vol / vol.sum())
    return cover.lo[t] + cover.side[t, None] * rng.random((k, cover.n))
