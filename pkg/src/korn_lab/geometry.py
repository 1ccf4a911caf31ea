"""Domain catalog and the distance-to-boundary weight rho.

Every domain is a bounded open set in R^n described in closed form.  Points
are passed as arrays of shape ``(k, n)``; all queries are vectorized.

Box unions (``axis_box``, ``l_shape``, ``box_union``) are handled through a
cell decomposition of their bounding box: the grid generated by all box
coordinates splits the bounding box into cells which are either inside the
union or outside it.  Distances to the complement then reduce to box-box
distances, which are exact.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DomainSpecError(ValueError):
    """Invalid domain description.  ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ExteriorPointError(ValueError):
    """Raised when a distance is requested outside the closure of the domain.

    ``distance`` holds the negative-convention value (minus the distance to
    the closure, or a lower bound of it for curved domains) for every point
    of the query; entries for admissible points are nonnegative.
    """

    def __init__(self, distance: np.ndarray, mask: np.ndarray):
        self.distance = distance
        self.mask = mask
        super().__init__(f"{int(mask.sum())} point(s) outside the domain closure")


# ---------------------------------------------------------------------------
# small vectorized helpers
# ---------------------------------------------------------------------------

def point_box_distance(x, lo, hi):
    """Euclidean distance from points ``x`` (k, n) to closed boxes (m, n).

    Returns an array of shape (k, m).
    """
    x = np.asarray(x, dtype=float)[:, None, :]
    d = np.maximum(np.maximum(lo[None] - x, x - hi[None]), 0.0)
    return np.sqrt((d * d).sum(-1))


def box_box_distance(lo1, hi1, lo2, hi2):
    """Distance between closed boxes; (k, n) against (m, n) -> (k, m)."""
    gap = np.maximum(np.maximum(lo2[None] - hi1[:, None], lo1[:, None] - hi2[None]), 0.0)
    return np.sqrt((gap * gap).sum(-1))


def point_segment_distance(x, a, b):
    """Distance from 2D points (k, 2) to segments a->b (m, 2) -> (k, m)."""
    d = b - a
    dd = np.maximum((d * d).sum(-1), np.finfo(float).tiny)
    w = x[:, None, :] - a[None]
    t = np.clip((w * d[None]).sum(-1) / dd[None], 0.0, 1.0)
    r = w - t[..., None] * d[None]
    return np.sqrt((r * r).sum(-1))


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def segments_intersect(p1, p2, q1, q2):
    """Closed-segment intersection test, broadcasting over leading axes."""
    o1 = _orient(p1, p2, q1)
    o2 = _orient(p1, p2, q2)
    o3 = _orient(q1, q2, p1)
    o4 = _orient(q1, q2, p2)
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)

    def on_seg(a, b, c, o):
        return (o == 0) & (np.minimum(a[..., 0], b[..., 0]) <= c[..., 0]) & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0])) \
            & (np.minimum(a[..., 1], b[..., 1]) <= c[..., 1]) & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1]))

    touch = on_seg(p1, p2, q1, o1) | on_seg(p1, p2, q2, o2) | on_seg(q1, q2, p1, o3) | on_seg(q1, q2, p2, o4)
    return proper | touch


# ---------------------------------------------------------------------------
# domain classes
# ---------------------------------------------------------------------------

@dataclass
class Domain:
    """Base class.  Subclasses implement the closed-form queries."""

    n: int
    lo: np.ndarray
    hi: np.ndarray
    kind: str = "domain"
    john_center: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    # -- required by subclasses --------------------------------------------
    def contains(self, x) -> np.ndarray:
        raise NotImplementedError

    def _closure_and_rho(self, x):
        """Return (in_closure, rho) with rho >= 0 on the closure and a
        negative exterior value elsewhere."""
        raise NotImplementedError

    def cube_status(self, lo, side):
        """For closed cubes ``lo + side*[0,1]^n`` return (dist, inside, disjoint).

        ``inside`` is true iff the closed cube lies in the open domain;
        ``dist`` is dist(cube, boundary) for inside cubes and 0 otherwise;
        ``disjoint`` is true iff the open cube misses the domain.
        """
        raise NotImplementedError

    # -- shared -------------------------------------------------------------
    def distance(self, x) -> np.ndarray:
        """Distance to the boundary for points in the closure."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ok, rho = self._closure_and_rho(x)
        if not np.all(ok):
            raise ExteriorPointError(rho, ~ok)
        return rho

    @property
    def extent(self) -> float:
        return float(np.max(self.hi - self.lo))

    def sample_interior(self, rng: np.random.Generator, k: int, min_rho: float = 0.0) -> np.ndarray:
        """Rejection-sample ``k`` interior points with rho > min_rho."""
        out = []
        got = 0
        while got < k:
            x = self.lo + (self.hi - self.lo) * rng.random((4 * k + 16, self.n))
            x = x[self.contains(x)]
            if min_rho > 0 and len(x):
                x = x[self.distance(x) > min_rho]
            out.append(x)
            got += len(x)
        return np.concatenate(out)[:k]

    def to_dict(self) -> dict:
        d = {"type": self.kind, **self.params}
        if self.john_center is not None:
            d["john_center"] = [float(v) for v in self.john_center]
        return d


class BoxUnion(Domain):
    """Interior of a finite union of closed axis-parallel boxes."""

    def __init__(self, boxes: Sequence[tuple[Sequence[float], Sequence[float]]], kind="box_union",
                 params=None, john_center=None):
        lo = np.array([b[0] for b in boxes], dtype=float)
        hi = np.array([b[1] for b in boxes], dtype=float)
        if lo.ndim != 2 or lo.shape != hi.shape:
            raise DomainSpecError("boxes must share one dimension", "boxes")
        if np.any(hi <= lo):
            raise DomainSpecError("every box needs hi > lo on all axes", "boxes")
        n = lo.shape[1]
        if n < 2:
            raise DomainSpecError("ambient dimension must be at least 2", "boxes")
        super().__init__(n=n, lo=lo.min(0), hi=hi.max(0), kind=kind,
                         params=params if params is not None else
                         {"boxes": [{"lo": a.tolist(), "hi": b.tolist()} for a, b in zip(lo, hi)]},
                         john_center=None if john_center is None else np.asarray(john_center, float))
        self.box_lo, self.box_hi = lo, hi
        if not _boxes_connected(lo, hi):
            raise DomainSpecError("union is not connected through (n-1)-dimensional contacts",
                                  "boxes")
        # cell decomposition of the bounding box
        ticks = [np.unique(np.concatenate([lo[:, i], hi[:, i]])) for i in range(n)]
        cells_lo, cells_hi = [], []
        for idx in itertools.product(*[range(len(t) - 1) for t in ticks]):
            cells_lo.append([ticks[i][j] for i, j in enumerate(idx)])
            cells_hi.append([ticks[i][j + 1] for i, j in enumerate(idx)])
        cells_lo = np.array(cells_lo)
        cells_hi = np.array(cells_hi)
        mid = 0.5 * (cells_lo + cells_hi)
        inside = np.any(np.all((mid[:, None] > lo[None]) & (mid[:, None] < hi[None]), -1), 1)
        self.in_lo, self.in_hi = cells_lo[inside], cells_hi[inside]
        self.out_lo, self.out_hi = cells_lo[~inside], cells_hi[~inside]

    def contains(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ok, rho = self._closure_and_rho(x)
        return ok & (rho > 0)

    def _closure_and_rho(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        dbox = point_box_distance(x, self.box_lo, self.box_hi).min(1)
        ok = dbox == 0.0
        rho = np.minimum(x - self.lo, self.hi - x).min(1)
        if len(self.out_lo):
            rho = np.minimum(rho, point_box_distance(x, self.out_lo, self.out_hi).min(1))
        rho = np.where(ok, np.maximum(rho, 0.0), -dbox)
        return ok, rho

    def cube_status(self, lo, side):
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        side = np.broadcast_to(np.asarray(side, dtype=float), (len(lo),))
        hi = lo + side[:, None]
        d = np.minimum(lo - self.lo, self.hi - hi).min(1)
        if len(self.out_lo):
            d = np.minimum(d, box_box_distance(lo, hi, self.out_lo, self.out_hi).min(1))
        inside = d > 0
        overlap = np.all((np.minimum(hi[:, None], self.in_hi[None]) - np.maximum(lo[:, None], self.in_lo[None])) > 0, -1)
        disjoint = ~np.any(overlap, 1)
        return np.where(inside, d, 0.0), inside, disjoint


def _boxes_connected(lo, hi) -> bool:
    m = len(lo)
    if m == 1:
        return True
    # (n-1)-dimensional contact: positive overlap on n-1 axes, touching or overlapping on the last
    ov = np.minimum(hi[:, None], hi[None]) - np.maximum(lo[:, None], lo[None])
    pos = (ov > 0).sum(-1)
    nonneg = np.all(ov >= 0, -1)
    adj = nonneg & (pos >= lo.shape[1] - 1)
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i]):
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return len(seen) == m


def axis_box(lo, hi, john_center=None) -> BoxUnion:
    lo = [float(v) for v in lo]
    hi = [float(v) for v in hi]
    return BoxUnion([(lo, hi)], kind="axis_box", params={"lo": lo, "hi": hi}, john_center=john_center)


def l_shape(n: int = 2, scale: float = 1.0, john_center=None) -> BoxUnion:
    """[0,s]^2 minus [s/2,s]^2, extruded along the remaining axes for n = 3."""
    if n not in (2, 3):
        raise DomainSpecError("l_shape supports n = 2 or 3", "n")
    s = float(scale)
    if not s > 0:
        raise DomainSpecError("scale must be positive", "scale")
    ext = [s] * (n - 2)
    boxes = [([0.0, 0.0] + [0.0] * (n - 2), [s, s / 2] + ext),
             ([0.0, 0.0] + [0.0] * (n - 2), [s / 2, s] + ext)]
    return BoxUnion(boxes, kind="l_shape", params={"n": n, "scale": s}, john_center=john_center)


class Polygon2D(Domain):
    """Simple polygon; vertex order is normalized to counter-clockwise."""

    def __init__(self, vertices, kind="polygon2d", params=None, john_center=None):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise DomainSpecError("need at least three 2D vertices", "vertices")
        if not np.all(np.isfinite(v)):
            raise DomainSpecError("vertices must be finite", "vertices")
        area2 = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if area2 == 0:
            raise DomainSpecError("polygon has zero area", "vertices")
        if area2 < 0:
            v = v[::-1].copy()
        if not polygon_is_simple(v):
            raise DomainSpecError("polygon not simple", "vertices")
        super().__init__(n=2, lo=v.min(0), hi=v.max(0), kind=kind,
                         params=params if params is not None else {"vertices": v.tolist()},
                         john_center=None if john_center is None else np.asarray(john_center, float))
        self.vertices = v
        self.a = v
        self.b = np.roll(v, -1, axis=0)

    def _inside_evenodd(self, x):
        a, b = self.a, self.b
        y = x[:, 1:2]
        cond = (a[None, :, 1] > y) != (b[None, :, 1] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a[None, :, 0] + (y - a[None, :, 1]) * (b[None, :, 0] - a[None, :, 0]) / (b[None, :, 1] - a[None, :, 1])
        cross = cond & (x[:, 0:1] < xint)
        return (cross.sum(1) % 2) == 1

    def _closure_and_rho(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(len(x))
        ok = np.empty(len(x), dtype=bool)
        for s in range(0, len(x), 4096):
            xs = x[s:s + 4096]
            d = point_segment_distance(xs, self.a, self.b).min(1)
            ins = self._inside_evenodd(xs) | (d == 0)
            ok[s:s + 4096] = ins
            out[s:s + 4096] = np.where(ins, d, -d)
        return ok, out

    def contains(self, x):
        ok, rho = self._closure_and_rho(x)
        return ok & (rho > 0)

    def cube_status(self, lo, side):
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        side = np.broadcast_to(np.asarray(side, dtype=float), (len(lo),))
        k = len(lo)
        dist = np.empty(k)
        hit = np.empty(k, dtype=bool)
        corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        for s in range(0, k, 2048):
            L = lo[s:s + 2048]
            S = side[s:s + 2048]
            H = L + S[:, None]
            # segment vs closed square: separating-axis test
            a, b = self.a[None], self.b[None]
            sx_lo = np.minimum(a[..., 0], b[..., 0])
            sx_hi = np.maximum(a[..., 0], b[..., 0])
            sy_lo = np.minimum(a[..., 1], b[..., 1])
            sy_hi = np.maximum(a[..., 1], b[..., 1])
            box_ok = (sx_lo <= H[:, 0:1]) & (sx_hi >= L[:, 0:1]) & (sy_lo <= H[:, 1:2]) & (sy_hi >= L[:, 1:2])
            cs = L[:, None, :] + S[:, None, None] * corners[None]          # (c, 4, 2)
            o = _orient(a[:, :, None, :], b[:, :, None, :], cs[:, None, :, :])  # (c, e, 4)
            straddle = ~(np.all(o > 0, -1) | np.all(o < 0, -1))
            inter = np.any(box_ok & straddle, 1)
            # vertex-to-set distances (valid when disjoint)
            dv = point_box_distance(self.vertices, L, H).min(0)
            dc = point_segment_distance(cs.reshape(-1, 2), self.a, self.b).min(1).reshape(-1, 4).min(1)
            dist[s:s + 2048] = np.where(inter, 0.0, np.minimum(dv, dc))
            hit[s:s + 2048] = inter
        centers = lo + 0.5 * side[:, None]
        cin = self._inside_evenodd(centers)
        inside = ~hit & cin
        disjoint = ~hit & ~cin
        return np.where(inside, dist, 0.0), inside, disjoint


def polygon_is_simple(v: np.ndarray) -> bool:
    """True iff non-adjacent edges do not meet and the vertices are distinct."""
    m = len(v)
    a = v
    b = np.roll(v, -1, axis=0)
    if np.any(np.all(a == b, axis=1)):
        return False
    inter = segments_intersect(a[:, None], b[:, None], a[None], b[None])
    i, j = np.triu_indices(m, k=2)
    keep = ~((i == 0) & (j == m - 1))
    return not np.any(inter[i[keep], j[keep]])


def koch_vertices(level: int) -> np.ndarray:
    """Koch snowflake prefractal scaled into the unit square, CCW."""
    if level < 0:
        raise DomainSpecError("level must be nonnegative", "level")
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    for _ in range(level):
        a = pts
        b = np.roll(pts, -1, axis=0)
        d = b - a
        normal = np.stack([d[:, 1], -d[:, 0]], 1)  # right side = outward for CCW
        p1 = a + d / 3
        p3 = a + 2 * d / 3
        p2 = a + d / 2 + normal * (math.sqrt(3) / 6)
        pts = np.stack([a, p1, p2, p3], 1).reshape(-1, 2)
    lo = pts.min(0)
    ext = (pts.max(0) - lo).max()
    return (pts - lo) / ext


def koch_prefractal2d(level: int = 3, john_center=None) -> Polygon2D:
    return Polygon2D(koch_vertices(level), kind="koch_prefractal2d", params={"level": int(level)},
                     john_center=john_center)


class Cusp3D(Domain):
    """{0 < x1, x2 < 1, 0 < x3 < x2**gamma} with gamma > 1."""

    def __init__(self, gamma: float, john_center=None):
        gamma = float(gamma)
        if not gamma > 1:
            raise DomainSpecError("gamma must exceed 1", "gamma")
        super().__init__(n=3, lo=np.zeros(3), hi=np.ones(3), kind="cusp3d", params={"gamma": gamma},
                         john_center=None if john_center is None else np.asarray(john_center, float))
        self.gamma = gamma

    def curve_distance(self, p2, p3, iters: int = 80) -> np.ndarray:
        """Distance in the (x2, x3) plane from points below the graph
        x3 = x2**gamma to the graph.  Safeguarded Newton on the convex
        squared-distance function over [p3**(1/gamma), p2]."""
        g = self.gamma
        p2 = np.asarray(p2, dtype=float)
        p3 = np.maximum(np.asarray(p3, dtype=float), 0.0)
        lo = p3 ** (1.0 / g)
        hi = p2.copy()
        t = 0.5 * (lo + hi)
        for _ in range(iters):
            tg1 = t ** (g - 1)
            tg = tg1 * t
            fp = (t - p2) + g * tg1 * (tg - p3)
            tg2 = t ** (g - 2) if g != 2 else np.ones_like(t)
            fpp = 1 + g * (g - 1) * tg2 * (tg - p3) + g * g * tg1 * tg1
            lo = np.where(fp < 0, t, lo)
            hi = np.where(fp >= 0, t, hi)
            tn = t - fp / fpp
            bad = ~((tn > lo) & (tn < hi))
            tn = np.where(bad, 0.5 * (lo + hi), tn)
            if np.all(np.abs(tn - t) <= 1e-16 * np.maximum(1.0, np.abs(t))):
                t = tn
                break
            t = tn
        return np.hypot(t - p2, t ** g - p3)

    def _closure_and_rho(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
        top = np.where(x2 > 0, np.maximum(x2, 0.0) ** self.gamma, 0.0)
        viol = np.stack([-x1, x1 - 1, -x2, x2 - 1, -x3, x3 - top], 1).max(1)
        ok = viol <= 0
        rho = np.full(len(x), 0.0)
        if np.any(ok):
            xi = x[ok]
            c = self.curve_distance(xi[:, 1], xi[:, 2])
            rho[ok] = np.minimum.reduce([xi[:, 0], 1 - xi[:, 0], 1 - xi[:, 1], xi[:, 2], c])
            rho[ok] = np.maximum(rho[ok], 0.0)
        rho = np.where(ok, rho, -viol)
        return ok, rho

    def contains(self, x):
        ok, rho = self._closure_and_rho(x)
        return ok & (rho > 0)

    def cube_status(self, lo, side):
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        side = np.broadcast_to(np.asarray(side, dtype=float), (len(lo),))
        hi = lo + side[:, None]
        g = self.gamma
        a2 = np.maximum(lo[:, 1], 0.0)
        inside = (lo[:, 0] > 0) & (hi[:, 0] < 1) & (hi[:, 1] < 1) & (lo[:, 2] > 0) & (hi[:, 2] < a2 ** g)
        dist = np.zeros(len(lo))
        if np.any(inside):
            L, H = lo[inside], hi[inside]
            c = self.curve_distance(L[:, 1], H[:, 2])
            dist[inside] = np.minimum.reduce([L[:, 0], 1 - H[:, 0], 1 - H[:, 1], L[:, 2], c])
        b2 = np.clip(hi[:, 1], 0.0, None)
        disjoint = (hi[:, 0] <= 0) | (lo[:, 0] >= 1) | (hi[:, 1] <= 0) | (lo[:, 1] >= 1) | (hi[:, 2] <= 0) \
            | (lo[:, 2] >= np.minimum(b2, 1.0) ** g)
        return dist, inside, disjoint

    def boundary_sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        """Points spread over the boundary pieces, roughly area-weighted."""
        g = self.gamma
        area_side = 1.0 / (g + 1)
        pieces = np.array([area_side, area_side, 1.0, 1.0, 1.5])
        counts = rng.multinomial(k, pieces / pieces.sum())
        out = []
        # x1 = 0 and x1 = 1 faces
        for face, cnt in zip((0.0, 1.0), counts[:2]):
            t = rng.random(cnt)
            u = rng.random(cnt) * t ** g
            out.append(np.stack([np.full(cnt, face), t, u], 1))
        # x2 = 1 face
        c = counts[2]
        out.append(np.stack([rng.random(c), np.ones(c), rng.random(c)], 1))
        # bottom x3 = 0
        c = counts[3]
        out.append(np.stack([rng.random(c), rng.random(c), np.zeros(c)], 1))
        # graph
        c = counts[4]
        t = rng.random(c)
        out.append(np.stack([rng.random(c), t, t ** g], 1))
        return np.concatenate(out)


def cusp3d(gamma: float = 2.0, john_center=None) -> Cusp3D:
    return Cusp3D(gamma, john_center=john_center)


# ---------------------------------------------------------------------------
# dyadic cubes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DyadicGrid:
    """Embedding of the bounding box: cube (l, k) = origin + scale 2^-l [k, k+1]^n."""

    origin: tuple
    scale: float

    @classmethod
    def for_domain(cls, domain: Domain) -> "DyadicGrid":
        ext = domain.extent
        scale = 2.0 ** math.ceil(math.log2(ext)) if ext > 0 else 1.0
        return cls(tuple(float(v) for v in domain.lo), float(scale))

    def side(self, level):
        return self.scale * np.ldexp(1.0, -np.asarray(level))

    def lower(self, level, index):
        index = np.asarray(index)
        return np.asarray(self.origin) + self.side(level)[..., None] * index


@dataclass(frozen=True)
class DyadicCube:
    level: int
    index: tuple
    grid: DyadicGrid

    @property
    def side(self) -> float:
        return float(self.grid.side(self.level))

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.grid.origin) + self.side * np.asarray(self.index, dtype=float)

    @property
    def center(self) -> np.ndarray:
        return self.lo + 0.5 * self.side


def cube_inside(domain: Domain, q: DyadicCube) -> bool:
    """True iff the closed cube lies in the open domain."""
    _, inside, _ = domain.cube_status(q.lo[None], q.side)
    return bool(inside[0])


def distance_to_boundary(domain: Domain, x) -> np.ndarray:
    """rho(x) for points in the closure; raises ExteriorPointError otherwise."""
    return domain.distance(x)


# ---------------------------------------------------------------------------
# JSON domain specs
# ---------------------------------------------------------------------------

def _vec(obj, key, path, n=None):
    if key not in obj:
        raise DomainSpecError("missing field", f"{path}.{key}")
    v = obj[key]
    if not isinstance(v, list) or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v):
        raise DomainSpecError("expected a list of numbers", f"{path}.{key}")
    if n is not None and len(v) != n:
        raise DomainSpecError(f"expected length {n}", f"{path}.{key}")
    if not all(math.isfinite(c) for c in v):
        raise DomainSpecError("entries must be finite", f"{path}.{key}")
    return [float(c) for c in v]


def domain_from_dict(obj: dict, path: str = "$") -> Domain:
    if not isinstance(obj, dict):
        raise DomainSpecError("expected an object", path)
    kind = obj.get("type")
    jc = obj.get("john_center")
    if jc is not None:
        jc = _vec(obj, "john_center", path)
    if kind == "axis_box":
        lo = _vec(obj, "lo", path)
        hi = _vec(obj, "hi", path, len(lo))
        return axis_box(lo, hi, john_center=jc)
    if kind == "l_shape":
        n = obj.get("n", 2)
        if n not in (2, 3):
            raise DomainSpecError("n must be 2 or 3", f"{path}.n")
        scale = obj.get("scale", 1.0)
        if not isinstance(scale, (int, float)) or not scale > 0:
            raise DomainSpecError("scale must be a positive number", f"{path}.scale")
        return l_shape(int(n), float(scale), john_center=jc)
    if kind == "box_union":
        boxes = obj.get("boxes")
        if not isinstance(boxes, list) or not boxes:
            raise DomainSpecError("expected a nonempty list", f"{path}.boxes")
        bl = []
        for i, b in enumerate(boxes):
            lo = _vec(b, "lo", f"{path}.boxes[{i}]")
            hi = _vec(b, "hi", f"{path}.boxes[{i}]", len(lo))
            bl.append((lo, hi))
        return BoxUnion(bl, john_center=jc)
    if kind == "polygon2d":
        verts = obj.get("vertices")
        if not isinstance(verts, list):
            raise DomainSpecError("expected a list of [x, y] pairs", f"{path}.vertices")
        for i, p in enumerate(verts):
            if not (isinstance(p, list) and len(p) == 2 and all(isinstance(c, (int, float)) for c in p)):
                raise DomainSpecError("expected [x, y]", f"{path}.vertices[{i}]")
        return Polygon2D(verts, john_center=jc)
    if kind == "cusp3d":
        g = obj.get("gamma")
        if not isinstance(g, (int, float)) or isinstance(g, bool):
            raise DomainSpecError("expected a number", f"{path}.gamma")
        return Cusp3D(float(g), john_center=jc)
    if kind == "koch_prefractal2d":
        lv = obj.get("level", 3)
        if not isinstance(lv, int) or lv < 0 or lv > 6:
            raise DomainSpecError("level must be an integer in [0, 6]", f"{path}.level")
        return koch_prefractal2d(lv, john_center=jc)
    raise DomainSpecError(f"unknown domain type {kind!r}", f"{path}.type")


def parse_domain_spec(text: str) -> Domain:
    """Parse and validate a JSON domain description."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainSpecError(f"malformed JSON ({exc.msg})", "$") from exc
    return domain_from_dict(obj)


def catalog() -> dict[str, Domain]:
    """The five-domain audit catalog."""
    return {
        "unit_square": axis_box([0, 0], [1, 1]),
        "l_shape": l_shape(2, 1.0),
        "unit_cube": axis_box([0, 0, 0], [1, 1, 1]),
        "cusp_gamma2": cusp3d(2.0),
        "koch_level3": koch_prefractal2d(3),
    }


def catalog_levels() -> dict[str, int]:
    """Audit truncation depth per catalog member (8 in 2D, 6 in 3D)."""
    return {k: (8 if d.n == 2 else 6) for k, d in catalog().items()}
