"""Discrete audit of the duality argument that turns the V-decomposition
into a weighted conformal Korn inequality.

For a quadratic field u with Du orthogonal to V and an S-element
F = g + rho^{2 beta} psi, each step of the chain

    int Du:F = int Du:g = sum_t int Du:g_t <= sum_t |int Du:g_t|
             <= ... <= C sqrt(M) R C1 ||l(u)||_{L^2(rho^beta)} ||F||_{L^2(rho^-beta)}

is evaluated with the same discrete measure, so every link can be checked
to round-off.  Only p = q = 2 with the Frobenius norm is handled.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .conformal import orthonormalize_v_basis, split_W_plus_V, trace_free_part, v_generators
from .decompose import partition_of_unity, v_decompose
from .fields import frob


@lru_cache(maxsize=None)
def cube_korn_constant(n: int = 3) -> float:
    """sup over quadratic vector fields u on a cube of
    inf_{phi in V} ||Du - phi|| / ||l(u)||  (scale invariant)."""
    g, w = np.polynomial.legendre.leggauss(3)
    x = np.array(list(itertools.product(0.5 * (g + 1), repeat=n))) - 0.5
    wt = np.prod(np.array(list(itertools.product(0.5 * w, repeat=n))), axis=1)
    mons = [e for e in itertools.product(range(3), repeat=n) if sum(e) <= 2]
    cols = []
    for j in range(n):
        for e in mons:
            D = np.zeros((len(x), n, n))
            for k in range(n):
                if e[k]:
                    ek = list(e)
                    ek[k] -= 1
                    D[:, j, k] = e[k] * np.prod(x ** np.array(ek), axis=1)
            cols.append(D)
    D = np.array(cols)                                   # (d, N, n, n)
    gens = v_generators(x, np.zeros(n))
    Gf = gens.reshape(len(gens), len(x), -1)
    Df = D.reshape(len(D), len(x), -1)
    gram = np.einsum("inx,jnx,n->ij", Gf, Gf, wt)
    coef = np.linalg.solve(gram, np.einsum("inx,dnx,n->id", Gf, Df, wt))
    R = Df - np.einsum("id,inx->dnx", coef, Gf)
    A = np.einsum("inx,jnx,n->ij", R, R, wt)
    Lf = trace_free_part(D).reshape(len(D), len(x), -1)
    B = np.einsum("inx,jnx,n->ij", Lf, Lf, wt)
    ev, U = np.linalg.eigh(B)
    keep = ev > 1e-10 * ev.max()
    U = U[:, keep]
    mu = sla.eigh(U.T @ A @ U, U.T @ B @ U, eigvals_only=True)
    return float(np.sqrt(mu.max()))


@dataclass
class DualityChain:
    names: list
    values: list
    kinds: list              # "=" or "<=" between consecutive values
    violations: list
    tol: float
    constants: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"links": [{"name": n, "value": v} for n, v in zip(self.names, self.values)],
                "kinds": self.kinds, "violations": self.violations, "constants": self.constants}


def _basis(mesh, beta, origin):
    key = ("v_basis", float(beta), tuple(np.asarray(origin, float)))
    if key not in mesh._cache:
        mesh._cache[key] = orthonormalize_v_basis(mesh, 2.0, beta, origin=origin)
    return mesh._cache[key]


def random_quadratic_gradient(mesh, rng: np.random.Generator, beta: float, origin):
    """Du and l(u) at mesh nodes for a random quadratic u with Du orthogonal
    to V in the rho^{2 beta} inner product."""
    n = mesh.n
    L = mesh.cover.grid.scale
    x0 = np.average(mesh.x, axis=0, weights=mesh.w)
    z = (mesh.x - x0) / L
    Bm = rng.standard_normal((n, n))
    Q = rng.standard_normal((n, n, n))
    Q = 0.5 * (Q + np.swapaxes(Q, 1, 2))
    Du = (Bm[None] + 2 * np.einsum("jkl,Nl->Njk", Q, z)) / L
    basis = _basis(mesh, beta, origin)
    alpha = np.array([np.dot(basis.weight, frob(Du, basis.psi[j])) for j in range(basis.m)])
    Du = Du - np.tensordot(alpha, basis.psi, axes=1)
    return Du, trace_free_part(Du)


def random_s_element(mesh, rng: np.random.Generator, beta: float, origin):
    """F (degree-one polynomial matrix field) normalized in L^2(rho^-beta),
    and its split F = g + rho^{2 beta} psi."""
    n = mesh.n
    L = mesh.cover.grid.scale
    x0 = np.average(mesh.x, axis=0, weights=mesh.w)
    z = (mesh.x - x0) / L
    F = rng.standard_normal((n, n))[None] + np.einsum("jkl,Nl->Njk", rng.standard_normal((n, n, n)), z)
    rho = mesh.rho()
    nrm = np.sqrt(np.sum(mesh.w * rho ** (-2 * beta) * (F ** 2).sum((1, 2))))
    F = F / nrm
    basis = _basis(mesh, beta, origin)
    return F, split_W_plus_V(F, basis, mesh, 2.0)


def _segment_reduce(fn, vals, ptr):
    out = np.zeros(len(ptr) - 1)
    nz = ptr[1:] > ptr[:-1]
    out[nz] = fn.reduceat(vals, ptr[:-1][nz])
    return out


def verify_duality_chain(mesh, beta: float, rng: np.random.Generator, pou=None,
                         tol: float = 1e-8, Du=None) -> DualityChain:
    """Evaluate every link for a random S-element and a quadratic u.

    ``Du`` (nodal gradients of a quadratic field orthogonal to V) may be
    supplied; otherwise a random one is drawn."""
    n = mesh.n
    tree = mesh.tree
    origin = mesh.cover.center[tree.root]
    pou = partition_of_unity(mesh) if pou is None else pou
    if Du is None:
        Du, lu = random_quadratic_gradient(mesh, rng, beta, origin)
    else:
        Du = np.asarray(Du, float)
        lu = trace_free_part(Du)
    F, split = random_s_element(mesh, rng, beta, origin)
    g = split.h
    dec = v_decompose(mesh, g, pou, origin, audit=False)
    w, rho = mesh.w, mesh.rho()
    pn, pt, ptr = mesh.pair_node, mesh.pair_t, mesh.pair_ptr
    T = len(mesh.cover)
    wp = w[pn]
    rp = rho[pn]

    psi_part = F - g
    L0 = float(np.dot(w, frob(Du, F)))
    L1 = float(np.dot(w, frob(Du, g)))
    pair = np.bincount(pt, weights=wp * frob(Du[pn], dec.gt), minlength=T)
    L2 = float(pair.sum())
    L3 = float(np.abs(pair).sum())
    gnorm_t = np.sqrt(np.bincount(pt, weights=wp * rp ** (-2 * beta) * (dec.gt ** 2).sum((1, 2)), minlength=T))
    l2_t = np.bincount(pt, weights=wp * (lu[pn] ** 2).sum((1, 2)), minlength=T)
    l2w_t = np.bincount(pt, weights=wp * rp ** (2 * beta) * (lu[pn] ** 2).sum((1, 2)), minlength=T)
    rmax = _segment_reduce(np.maximum, rp, ptr)
    rmin = _segment_reduce(np.minimum, rp, ptr)
    Iw = np.zeros(T)
    Iu = np.zeros(T)
    for t in range(T):
        sl = slice(ptr[t], ptr[t + 1])
        nodes = pn[sl]
        if len(nodes) == 0:
            continue
        G = v_generators(mesh.x[nodes], mesh.cover.center[t]).reshape(-1, len(nodes) * n * n)
        d = Du[nodes].ravel()
        for wt, out in ((w[nodes] * rho[nodes] ** (2 * beta), Iw), (w[nodes], Iu)):
            wx = np.repeat(wt, n * n)
            Gw = G * wx
            c = np.linalg.solve(Gw @ G.T, Gw @ d)
            r = d - c @ G
            out[t] = np.sqrt(max(np.dot(wx, r * r), 0.0))
    Ccube = cube_korn_constant(n)
    L3w = float(np.dot(Iw, gnorm_t))
    L4 = float(np.dot(rmax ** beta * Iu, gnorm_t))
    L5 = float(np.dot(rmax ** beta * Ccube * np.sqrt(l2_t), gnorm_t))
    ratio_t = np.where(rmin > 0, (rmax / np.where(rmin > 0, rmin, 1)) ** beta, 0.0)
    L6 = float(np.dot(Ccube * ratio_t * np.sqrt(l2w_t), gnorm_t))
    C = Ccube * float(ratio_t.max())
    L7 = C * float(np.sqrt(l2w_t.sum()) * np.sqrt((gnorm_t ** 2).sum()))
    Mov = int(np.bincount(pn, minlength=len(w)).max())
    lw = float(np.sqrt(np.sum(w * rho ** (2 * beta) * (lu ** 2).sum((1, 2)))))
    gn = float(np.sqrt(np.sum(w * rho ** (-2 * beta) * (g ** 2).sum((1, 2)))))
    R = float(np.sqrt((gnorm_t ** 2).sum()) / gn)
    L8 = C * np.sqrt(Mov) * lw * R * gn
    L9 = C * np.sqrt(Mov) * R * split.C1 * lw * split.F_norm

    names = ["int Du:F", "int Du:g", "sum_t int Du:g_t", "sum_t |int Du:g_t|",
             "sum_t I_t(rho^b) ||g_t||", "sum_t max rho^b I_t ||g_t||",
             "sum_t max rho^b C_cube ||l(u)||_t ||g_t||", "sum_t C_cube (max/min rho)^b ||l(u)||_{t,rho^b} ||g_t||",
             "C (sum_t ||l(u)||_t^2)^1/2 (sum_t ||g_t||^2)^1/2", "C sqrt(M) ||l(u)|| R ||g||",
             "C sqrt(M) R C1 ||l(u)|| ||F||"]
    values = [L0, L1, L2, L3, L3w, L4, L5, L6, L7, L8, L9]
    kinds = ["=", "=", "<=", "<=", "<=", "<=", "<=", "<=", "<=", "<="]
    scale = max(max(abs(v) for v in values), 1e-300)
    viol = []
    for i, k in enumerate(kinds):
        a, b = values[i], values[i + 1]
        bad = abs(a - b) > tol * scale if k == "=" else a > b + tol * scale
        if bad:
            viol.append({"link": f"{names[i]} {k} {names[i + 1]}", "lhs": a, "rhs": b})
    psi_pair = float(np.dot(w, frob(Du, psi_part)))
    if abs(psi_pair) > tol * scale:
        viol.append({"link": "int Du : rho^{2b} psi = 0", "lhs": psi_pair, "rhs": 0.0})
    return DualityChain(names=names, values=values, kinds=kinds, violations=viol, tol=tol,
                        constants={"C_cube": Ccube, "C": C, "M": Mov, "R": R, "C1": split.C1,
                                   "beta": beta})
