"""Matrix fields over a cover: polynomial algebra, Gauss rules, the cell
quadrature on the union of extended cubes, entrywise norms and weighted
Lebesgue norms.

Two payload classes are used.  ``Poly`` holds exact polynomial coefficients
(integers, floats or Fractions) and is used wherever an identity should hold
at the coefficient level.  Nodal arrays on a ``QuadMesh`` carry everything
that involves the partition of unity, absolute values or powers of rho; the
identities asserted on them are identities of the discrete measure and hold
to rounding.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

TOL_EXACT = 1e-12
TOL_QUAD = 1e-9
TOL_EIG = 1e-6


class QuadratureWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# Gauss rules
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GaussRule:
    """Gauss-Legendre rule of order G on [0, 1] (exact to degree 2G-1)."""

    order: int

    @property
    def nodes(self) -> np.ndarray:
        return _gauss01(self.order)[0]

    @property
    def weights(self) -> np.ndarray:
        return _gauss01(self.order)[1]

    @property
    def exact_degree(self) -> int:
        return 2 * self.order - 1

    def tensor(self, n: int):
        """Nodes (G^n, n) and weights (G^n,) on the unit cube."""
        x, w = self.nodes, self.weights
        pts = np.array(list(itertools.product(x, repeat=n)))
        wts = np.prod(np.array(list(itertools.product(w, repeat=n))), axis=1)
        return pts, wts

    @classmethod
    def for_degree(cls, degree: int) -> "GaussRule":
        return cls(max(1, (degree + 2) // 2))


@lru_cache(maxsize=None)
def _gauss01(G: int):
    x, w = np.polynomial.legendre.leggauss(G)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_box(lo, hi, rule: GaussRule):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    pts, wts = rule.tensor(len(lo))
    return lo + pts * (hi - lo), wts * np.prod(hi - lo)


def distance_sliced_rule(n: int, G: int = 6):
    """Quadrature on the unit cube built from the 2n pyramids over its faces.

    In the pyramid over the face x_k = 0 the distance to the boundary is x_k
    itself, so integrands that are polynomial in (rho, x) are integrated
    exactly.  Returns (nodes, weights).
    """
    t, wt = _gauss01(G)
    t = 0.5 * t
    wt = 0.5 * wt
    u, wu = GaussRule(G).tensor(n - 1)
    pts, wts = [], []
    for k in range(n):
        for side in (0, 1):
            for ti, wi in zip(t, wt):
                x = np.empty((len(u), n))
                others = [j for j in range(n) if j != k]
                x[:, others] = ti + (1 - 2 * ti) * u
                x[:, k] = ti if side == 0 else 1 - ti
                pts.append(x)
                wts.append(wi * wu * (1 - 2 * ti) ** (n - 1))
    return np.concatenate(pts), np.concatenate(wts)


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------
class Poly:
    """Sparse multivariate polynomial {exponent tuple: coefficient}."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms=None):
        self.n = n
        self.terms = {}
        if terms:
            for e, c in terms.items():
                if c != 0:
                    self.terms[tuple(e)] = c

    @classmethod
    def const(cls, n, c):
        return cls(n, {(0,) * n: c})

    @classmethod
    def var(cls, n, i, c=1):
        e = [0] * n
        e[i] = 1
        return cls(n, {tuple(e): c})

    @classmethod
    def random(cls, n, degree, rng: np.random.Generator, integer: bool = False):
        terms = {}
        for e in monomials(n, degree):
            terms[e] = int(rng.integers(-5, 6)) if integer else float(rng.standard_normal())
        return cls(n, terms)

    def copy(self):
        return Poly(self.n, dict(self.terms))

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def _coerce(self, other):
        return other if isinstance(other, Poly) else Poly.const(self.n, other)

    def __add__(self, other):
        other = self._coerce(other)
        t = dict(self.terms)
        for e, c in other.terms.items():
            t[e] = t.get(e, 0) + c
        return Poly(self.n, t)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.n, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly(self.n, {e: c * other for e, c in self.terms.items()})
        t = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                t[e] = t.get(e, 0) + c1 * c2
        return Poly(self.n, t)

    __rmul__ = __mul__

    def diff(self, i: int) -> "Poly":
        t = {}
        for e, c in self.terms.items():
            if e[i] > 0:
                f = list(e)
                f[i] -= 1
                t[tuple(f)] = t.get(tuple(f), 0) + c * e[i]
        return Poly(self.n, t)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for e, c in self.terms.items():
            term = np.full(x.shape[:-1], float(c))
            for i, k in enumerate(e):
                if k:
                    term = term * x[..., i] ** k
            out = out + term
        return out

    def integrate_box(self, lo, hi):
        """Exact integral over the box [lo, hi]; Fractions in, Fraction out."""
        total = 0
        for e, c in self.terms.items():
            v = c
            for i, k in enumerate(e):
                v = v * (_pow(hi[i], k + 1) - _pow(lo[i], k + 1)) * Fraction(1, k + 1)
            total = total + v
        return total

    def shift(self, y) -> "Poly":
        """p(x + y) as a polynomial in x."""
        out = Poly.const(self.n, 0)
        for e, c in self.terms.items():
            term = Poly.const(self.n, c)
            for i, k in enumerate(e):
                lin = Poly.var(self.n, i) + y[i]
                for _ in range(k):
                    term = term * lin
            out = out + term
        return out

    def __eq__(self, other):
        other = self._coerce(other)
        return (self - other).is_zero()

    def __repr__(self):
        return f"Poly(n={self.n}, {self.terms})"


def _pow(a, k):
    return a ** k


def monomials(n: int, degree: int):
    return [e for d in range(degree + 1)
            for e in itertools.product(range(d + 1), repeat=n) if sum(e) == d]


def poly_array(shape, n) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    for idx in np.ndindex(*shape):
        out[idx] = Poly(n)
    return out


def poly_gradient(v: np.ndarray) -> np.ndarray:
    """D v with (Dv)_{jk} = d v_j / d x_k for a vector of Poly."""
    n = len(v)
    out = np.empty((n, n), dtype=object)
    for j in range(n):
        for k in range(n):
            out[j, k] = v[j].diff(k)
    return out


def eval_poly_array(P: np.ndarray, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + P.shape)
    for idx in np.ndindex(*P.shape):
        out[(...,) + idx] = P[idx](x)
    return out


def poly_frobenius(P: np.ndarray, Q: np.ndarray) -> Poly:
    """Pointwise P : Q for matrix polynomials."""
    n = next(iter(P.flat)).n
    s = Poly(n)
    for idx in np.ndindex(*P.shape):
        s = s + P[idx] * Q[idx]
    return s


def integrate_poly(p: Poly, lo, hi, rule: GaussRule | None = None):
    """Integrate a polynomial over a box: exactly when ``rule`` is None,
    otherwise by the tensor Gauss rule with a warning when its degree budget
    is exceeded."""
    if rule is None:
        return p.integrate_box(lo, hi)
    if p.degree > rule.exact_degree:
        warnings.warn(f"degree {p.degree} exceeds Gauss order {rule.order} budget "
                      f"({rule.exact_degree}); result is approximate", QuadratureWarning)
    x, w = gauss_box(lo, hi, rule)
    return float(np.dot(w, p(x)))


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------
def entrywise_norm_r(values: np.ndarray, r: float) -> np.ndarray:
    """Pointwise (sum_ij |g_ij|^r)^(1/r) for values of shape (..., n, n)."""
    a = np.abs(np.asarray(values, dtype=float))
    a = a.reshape(a.shape[:-2] + (-1,))
    if np.isinf(r):
        return a.max(-1)
    if r == 1:
        return a.sum(-1)
    if r == 2:
        return np.sqrt((a * a).sum(-1))
    return (a ** r).sum(-1) ** (1.0 / r)


def weighted_Lq_norm(values: np.ndarray, weights: np.ndarray, rho, q: float,
                     beta: float = 0.0, sign: int = -1, r: float | None = None) -> float:
    """(sum_x w_x |g(x)|_r^q rho(x)^(sign q beta))^(1/q).

    ``values`` has shape (N,) for scalars or (N, n, n) for matrices; the
    entrywise exponent r defaults to q.
    """
    if not (1 < q < np.inf):
        raise ValueError("q must lie in (1, inf)")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    v = np.asarray(values, dtype=float)
    a = np.abs(v) if v.ndim == 1 else entrywise_norm_r(v, q if r is None else r)
    dens = np.asarray(weights, dtype=float) * a ** q
    if beta != 0:
        dens = dens * np.asarray(rho, dtype=float) ** (sign * q * beta)
    return float(dens.sum() ** (1.0 / q))


def frob(a, b):
    return np.einsum("...ij,...ij->...", a, b)


# ---------------------------------------------------------------------------
# Quadrature on the union of extended cubes
# ---------------------------------------------------------------------------
def _subtract(lo, hi, holes):
    """Box minus a list of boxes, as a list of disjoint boxes (integer tuples)."""
    out = [(tuple(lo), tuple(hi))]
    n = len(lo)
    for hl, hh in holes:
        new = []
        for a, b in out:
            il = [max(a[i], hl[i]) for i in range(n)]
            ih = [min(b[i], hh[i]) for i in range(n)]
            if any(il[i] >= ih[i] for i in range(n)):
                new.append((a, b))
                continue
            a = list(a)
            b = list(b)
            for i in range(n):
                if a[i] < il[i]:
                    hi2 = list(b)
                    hi2[i] = il[i]
                    new.append((tuple(a), tuple(hi2)))
                    a[i] = il[i]
                if b[i] > ih[i]:
                    lo2 = list(a)
                    lo2[i] = ih[i]
                    new.append((tuple(lo2), tuple(b)))
                    b[i] = ih[i]
        out = new
    return out


def _intersect(alo, ahi, blo, bhi):
    lo = np.maximum(alo, blo)
    hi = np.minimum(ahi, bhi)
    if np.any(lo >= hi):
        return None
    return lo, hi


@dataclass
class QuadMesh:
    """Tensor Gauss quadrature on a box partition of the union of the
    extended cubes.

    Every cell lies entirely inside or outside each extended cube and each
    overlap cube, so restrictions of the discrete measure to Omega_t, W_t and
    B_t are exact sums over whole cells.

    Node-level pairs (``pair_node``, ``pair_t``) list every node of every
    extended cube, sorted by t; families {g_t} are stored on them.
    """

    tree: object
    overlaps: object
    rule: GaussRule
    cell_lo: np.ndarray         # integer units
    cell_hi: np.ndarray
    cell_owner: np.ndarray
    cell_q: np.ndarray          # Whitney cube containing the cell, -1 outside the covered region
    cell_b: np.ndarray          # overlap cube containing the cell, -1 if none
    x: np.ndarray
    w: np.ndarray
    node_cell: np.ndarray
    pair_node: np.ndarray
    pair_t: np.ndarray
    pair_ptr: np.ndarray
    _cache: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def cover(self):
        return self.tree.cover

    def __len__(self):
        return len(self.w)

    @property
    def node_q(self) -> np.ndarray:
        return self.cell_q[self.node_cell]

    @property
    def node_b(self) -> np.ndarray:
        return self.cell_b[self.node_cell]

    def rho(self) -> np.ndarray:
        if "rho" not in self._cache:
            dom = self.cover.domain
            if dom is None:
                raise ValueError("cover has no domain; rho is unavailable")
            self._cache["rho"] = dom.distance(self.x)
        return self._cache["rho"]

    def volume(self) -> float:
        return float(self.w.sum())

    def weights_exact(self) -> np.ndarray:
        """Node weights as Fractions (midpoint rule only)."""
        if self.rule.order != 1:
            raise ValueError("exact weights need the one-point rule")
        unit = Fraction(self.overlaps.unit)
        vol = np.prod(self.cell_hi - self.cell_lo, axis=1)
        return np.array([Fraction(int(v)) * unit ** self.n for v in vol], dtype=object)[self.node_cell]

    def segment(self, t: int) -> slice:
        return slice(self.pair_ptr[t], self.pair_ptr[t + 1])

    def nodes_of(self, t: int) -> np.ndarray:
        return self.pair_node[self.segment(t)]

    def b_volume(self) -> np.ndarray:
        """Discrete |B_t| (0 at the root)."""
        vol = np.zeros(len(self.cover))
        b = self.node_b
        np.add.at(vol, b[b >= 0], self.w[b >= 0])
        return vol

    def omega_volume(self) -> np.ndarray:
        vol = np.zeros(len(self.cover))
        np.add.at(vol, self.pair_t, self.w[self.pair_node])
        return vol

    # -- shadow machinery ---------------------------------------------------
    def shadow_points(self):
        """Signed tree points whose subtree sums give node membership in W_t.

        For each node with member cubes s_1..s_k sorted by preorder, the union
        of their root paths equals sum_i path(s_i) - sum_i path(lca(s_i, s_{i+1})).
        Returns (node, tree_node, sign) arrays.
        """
        if "shadow" in self._cache:
            return self._cache["shadow"]
        tr = self.tree
        node, t = self.pair_node, self.pair_t
        o = np.lexsort((tr.tin[t], node))
        node, t = node[o], t[o]
        same = node[1:] == node[:-1]
        l = tr.lca(t[:-1][same], t[1:][same])
        pts = (np.concatenate([node, node[:-1][same]]),
               np.concatenate([t, l]),
               np.concatenate([np.ones(len(t), dtype=np.int64), -np.ones(len(l), dtype=np.int64)]))
        self._cache["shadow"] = pts
        return pts

    def shadow_integral(self, values) -> np.ndarray:
        """sum over nodes of W_t of values (already multiplied by weights),
        for every t.  ``values`` may be (N,) or (N, k) and of object dtype."""
        node, tn, sg = self.shadow_points()
        values = np.asarray(values)
        acc = np.zeros((len(self.cover),) + values.shape[1:], dtype=values.dtype)
        contrib = values[node] * (sg if values.ndim == 1 else sg[:, None])
        np.add.at(acc, tn, contrib)
        return self.tree.subtree_sum(acc)

    def shadow_adjoint(self, c) -> np.ndarray:
        """Per-node sum of c_t over the t with node in W_t."""
        node, tn, sg = self.shadow_points()
        c = np.asarray(c)
        P = self.tree.root_path_sum(c)
        out = np.zeros((len(self),) + c.shape[1:], dtype=c.dtype)
        np.add.at(out, node, P[tn] * (sg if c.ndim == 1 else sg[:, None]))
        return out

    def shadow_volume(self) -> np.ndarray:
        if "wvol" not in self._cache:
            self._cache["wvol"] = self.shadow_integral(self.w)
        return self._cache["wvol"]


def build_quadrature(tree, overlaps, rule: GaussRule | int = 2) -> QuadMesh:
    """Partition the union of the extended cubes into boxes aligned with all
    extended-cube and overlap-cube faces and place tensor Gauss nodes."""
    if isinstance(rule, int):
        rule = GaussRule(rule)
    cov = tree.cover
    n = cov.n
    m = len(cov)
    U = overlaps.unit_level
    sh = U - cov.levels
    qlo = cov.index << sh[:, None]
    qhi = qlo + (np.int64(1) << sh)[:, None]
    olo, ohi = overlaps.omega_units()
    nonroot = tree.parent >= 0
    blo = overlaps.lo_units
    bhi = blo + overlaps.side_units[:, None]
    indptr, nbr = cov.adjacency()
    kids_ptr, kids = tree.children_csr()

    cells_lo, cells_hi, owner, cq, cb = [], [], [], [], []

    def emit(lo, hi, t, q, b, planes):
        # tensor split of the box by the planes strictly inside it
        cuts = []
        for i in range(n):
            p = planes[i]
            inner = p[(p > lo[i]) & (p < hi[i])]
            cuts.append(np.concatenate([[lo[i]], inner, [hi[i]]]))
        for combo in itertools.product(*[range(len(c) - 1) for c in cuts]):
            cells_lo.append([cuts[i][k] for i, k in enumerate(combo)])
            cells_hi.append([cuts[i][k + 1] for i, k in enumerate(combo)])
            owner.append(t)
            cq.append(q)
            cb.append(b)

    for t in range(m):
        near = np.concatenate([[t], nbr[indptr[t]:indptr[t + 1]]])
        planes = [np.unique(np.concatenate([olo[near, i], ohi[near, i]])) for i in range(n)]
        # overlap cubes meeting Q_t: B_t itself and those of the children
        bs = [int(s) for s in np.concatenate([[t], kids[kids_ptr[t]:kids_ptr[t + 1]]]) if nonroot[s]]
        holes = []
        for s in bs:
            r = _intersect(qlo[t], qhi[t], blo[s], bhi[s])
            if r is not None:
                holes.append((r, s))
        for a, b in _subtract(qlo[t], qhi[t], [(tuple(h[0]), tuple(h[1])) for h, _ in holes]):
            emit(np.array(a), np.array(b), t, t, -1, planes)
        for (hl, hh), s in holes:
            emit(hl, hh, t, t, s, planes)
        # fringe: part of Omega_t outside every Whitney cube and outside the
        # extended cubes of lower-numbered neighbors
        rem = [(tuple(qlo[s]), tuple(qhi[s])) for s in near]
        rem += [(tuple(olo[s]), tuple(ohi[s])) for s in near[1:] if s < t]
        for a, b in _subtract(olo[t], ohi[t], rem):
            emit(np.array(a), np.array(b), t, -1, -1, planes)

    cell_lo = np.array(cells_lo, dtype=np.int64)
    cell_hi = np.array(cells_hi, dtype=np.int64)
    owner = np.array(owner, dtype=np.int64)
    cq = np.array(cq, dtype=np.int64)
    cb = np.array(cb, dtype=np.int64)

    # extended cubes containing each cell: candidates are the owner and its neighbors
    deg = np.diff(indptr)
    cand_cell = np.concatenate([np.arange(len(owner)), np.repeat(np.arange(len(owner)), deg[owner])])
    cand_t = np.concatenate([owner, nbr[_ranges(indptr[owner], indptr[owner + 1])]])
    mid2 = cell_lo[cand_cell] + cell_hi[cand_cell]
    inside = np.all((mid2 > 2 * olo[cand_t]) & (mid2 < 2 * ohi[cand_t]), 1)
    pc, pt = cand_cell[inside], cand_t[inside]

    unit = overlaps.unit
    origin = np.asarray(cov.grid.origin, dtype=float)
    pts, wts = rule.tensor(n)
    k = len(wts)
    lo_f = origin + unit * cell_lo
    ext = unit * (cell_hi - cell_lo)
    x = (lo_f[:, None, :] + ext[:, None, :] * pts[None]).reshape(-1, n)
    w = (np.prod(ext, 1)[:, None] * wts[None]).reshape(-1)
    node_cell = np.repeat(np.arange(len(owner)), k)
    pair_node = (pc[:, None] * k + np.arange(k)[None]).reshape(-1)
    pair_t = np.repeat(pt, k)
    o = np.lexsort((pair_node, pair_t))
    pair_node, pair_t = pair_node[o], pair_t[o]
    pair_ptr = np.searchsorted(pair_t, np.arange(m + 1))
    return QuadMesh(tree=tree, overlaps=overlaps, rule=rule, cell_lo=cell_lo, cell_hi=cell_hi,
                    cell_owner=owner, cell_q=cq, cell_b=cb, x=x, w=w, node_cell=node_cell,
                    pair_node=pair_node, pair_t=pair_t, pair_ptr=pair_ptr)


def _ranges(starts, ends) -> np.ndarray:
    """Concatenation of arange(s, e) over pairs, vectorized."""
    lens = ends - starts
    if lens.sum() == 0:
        return np.zeros(0, dtype=np.int64)
    offs = np.repeat(starts - np.concatenate([[0], np.cumsum(lens)[:-1]]), lens)
    return np.arange(lens.sum()) + offs


# ---------------------------------------------------------------------------
# Matrix fields on a mesh
# ---------------------------------------------------------------------------
@dataclass
class MatrixField:
    """Nodal values (N, n, n) of a matrix field on a quadrature mesh."""

    mesh: QuadMesh
    values: np.ndarray

    @classmethod
    def zeros(cls, mesh: QuadMesh):
        return cls(mesh, np.zeros((len(mesh), mesh.n, mesh.n)))

    @classmethod
    def from_poly(cls, mesh: QuadMesh, P: np.ndarray, cubes=None):
        """Evaluate a matrix polynomial, restricted to the given Whitney cubes
        (all nodes when ``cubes`` is None)."""
        vals = eval_poly_array(P, mesh.x)
        if cubes is not None:
            keep = np.isin(mesh.node_q, np.asarray(cubes))
            vals[~keep] = 0.0
        return cls(mesh, vals)

    def support_cubes(self) -> np.ndarray:
        """Whitney cubes t with the field not identically zero on Omega_t."""
        nz = np.any(self.values != 0, axis=(1, 2))
        m = self.mesh
        return np.unique(m.pair_t[nz[m.pair_node]])

    def pair(self, other: np.ndarray) -> float:
        """Unweighted pairing with nodal values of another matrix field."""
        return float(np.dot(self.mesh.w, frob(self.values, other)))

    def norm_r(self, r: float) -> np.ndarray:
        return entrywise_norm_r(self.values, r)

    def lq_norm(self, q: float, beta: float = 0.0, sign: int = -1) -> float:
        rho = self.mesh.rho() if beta else None
        return weighted_Lq_norm(self.values, self.mesh.w, rho, q, beta, sign)
