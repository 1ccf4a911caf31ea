"""The trace-free strain l(v), the conformal kernel Sigma, the matrix space
V = D(Sigma), weighted orthonormal bases, the splitting W + rho^{p beta} V
and the truncation of W into finitely supported fields W_0.

Axis indices are 0-based throughout; H_i below is H_{i+1} in 1-based
notation.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .fields import (MatrixField, Poly, QuadMesh, entrywise_norm_r, eval_poly_array, frob,
                     monomials, poly_gradient, weighted_Lq_norm)


class GramError(RuntimeError):
    def __init__(self, message, cond):
        super().__init__(f"{message} (Gram condition number {cond:.3e})")
        self.cond = cond


def sigma_dim(n: int) -> int:
    return (n + 1) * (n + 2) // 2


def v_dim(n: int) -> int:
    return n * (n - 1) // 2 + 1 + n


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------
def h_matrix(i: int, z) -> np.ndarray:
    """H_i(z) for z of shape (..., n): z_i on the diagonal, z_j in column i,
    -z_k in row i, zero elsewhere."""
    z = np.asarray(z)
    n = z.shape[-1]
    if not 0 <= i < n:
        raise ValueError("axis index out of range")
    out = np.zeros(z.shape[:-1] + (n, n), dtype=z.dtype if z.dtype == object else float)
    for j in range(n):
        out[..., j, j] = z[..., i]
    for j in range(n):
        if j != i:
            out[..., j, i] = z[..., j]
            out[..., i, j] = -z[..., j]
    return out


def skew_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def skew_generator(n: int, i: int, j: int) -> np.ndarray:
    E = np.zeros((n, n))
    E[i, j] = 1.0
    E[j, i] = -1.0
    return E


def constant_generators(n: int) -> np.ndarray:
    """E_ij (i < j) followed by I, shape (n(n-1)/2 + 1, n, n)."""
    gens = [skew_generator(n, i, j) for i, j in skew_pairs(n)] + [np.eye(n)]
    return np.array(gens)


def constant_normalizers(n: int) -> np.ndarray:
    """int_B A_i : A_i / |B| for the constant generators (2 for skews, n for I)."""
    return np.array([2.0] * (n * (n - 1) // 2) + [float(n)])


def v_generators(x, origin=None) -> np.ndarray:
    """All m generators evaluated at x (N, n), shape (m, N, n, n)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    z = x - (0.0 if origin is None else np.asarray(origin, dtype=float))
    cg = constant_generators(n)
    out = np.empty((v_dim(n),) + x.shape[:-1] + (n, n))
    out[: len(cg)] = cg[:, None]
    for i in range(n):
        out[len(cg) + i] = h_matrix(i, z)
    return out


# ---------------------------------------------------------------------------
# polynomial algebra
# ---------------------------------------------------------------------------
def trace_free_strain(v) -> np.ndarray:
    """l(v) = eps(v) - (div v / n) I as a matrix of polynomials (exact)."""
    n = len(v)
    D = poly_gradient(v)
    div = Poly(n)
    for k in range(n):
        div = div + D[k, k]
    out = np.empty((n, n), dtype=object)
    for j in range(n):
        for k in range(n):
            e = (D[j, k] + D[k, j]) * Fraction(1, 2)
            if j == k:
                e = e - div * Fraction(1, n)
            out[j, k] = e
    return out


def trace_free_part(M: np.ndarray) -> np.ndarray:
    """Numeric l from gradients: sym(M) - tr(M)/n I for (..., n, n)."""
    n = M.shape[-1]
    S = 0.5 * (M + np.swapaxes(M, -1, -2))
    tr = np.trace(M, axis1=-2, axis2=-1)
    return S - (tr / n)[..., None, None] * np.eye(n)


@dataclass
class SigmaElement:
    """a + A(x-y) + lam(x-y) + <b, x-y>(x-y) - |x-y|^2 b / 2."""

    a: np.ndarray
    A: np.ndarray
    lam: object
    b: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a)
        self.A = np.asarray(self.A)
        self.b = np.asarray(self.b)
        self.y = np.asarray(self.y)
        if np.any(self.A + self.A.T != 0):
            raise ValueError("A must be skew-symmetric")

    @property
    def n(self) -> int:
        return len(self.a)

    @classmethod
    def random(cls, n, rng: np.random.Generator, integer: bool = True):
        def draw(shape):
            if integer:
                return rng.integers(-6, 7, size=shape).astype(object)
            return rng.standard_normal(shape)
        M = draw((n, n))
        A = M - M.T
        lam = draw(())
        lam = lam.item() if hasattr(lam, "item") else lam
        return cls(draw(n), A, lam, draw(n), draw(n))

    def __call__(self, x) -> np.ndarray:
        z = np.asarray(x, dtype=float) - self.y.astype(float)
        b = self.b.astype(float)
        zb = z @ b
        return (self.a.astype(float) + z @ self.A.astype(float).T + float(self.lam) * z
                + zb[..., None] * z - 0.5 * (z * z).sum(-1)[..., None] * b)

    def as_poly(self) -> np.ndarray:
        n = self.n
        z = [Poly.var(n, i) - self.y[i] for i in range(n)]
        zb = Poly(n)
        zz = Poly(n)
        for i in range(n):
            zb = zb + z[i] * self.b[i]
            zz = zz + z[i] * z[i]
        out = np.empty(n, dtype=object)
        for j in range(n):
            p = Poly.const(n, self.a[j]) + z[j] * self.lam + zb * z[j] - zz * (Fraction(1, 2) * self.b[j])
            for k in range(n):
                p = p + z[k] * self.A[j, k]
            out[j] = p
        return out

    def d_sigma(self) -> "VElement":
        return VElement(self.A, self.lam, self.b, self.y)


@dataclass
class VElement:
    """A + lam I + sum_i b_i H_i(x - y)."""

    A: np.ndarray
    lam: object
    b: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return len(self.b)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = x - np.asarray(self.y, dtype=float)
        n = self.n
        out = np.broadcast_to(np.asarray(self.A, float) + float(self.lam) * np.eye(n),
                              x.shape[:-1] + (n, n)).copy()
        for i in range(n):
            out += float(self.b[i]) * h_matrix(i, z)
        return out

    def as_poly(self) -> np.ndarray:
        n = self.n
        z = np.array([Poly.var(n, i) - self.y[i] for i in range(n)], dtype=object)
        out = np.empty((n, n), dtype=object)
        for j in range(n):
            for k in range(n):
                out[j, k] = Poly.const(n, self.A[j, k] + (self.lam if j == k else 0))
        for i in range(n):
            Hi = h_matrix(i, z)
            for j in range(n):
                for k in range(n):
                    if not (isinstance(Hi[j, k], (int, float)) and Hi[j, k] == 0):
                        out[j, k] = out[j, k] + Hi[j, k] * self.b[i]
        return out

    def coords(self) -> np.ndarray:
        """Coordinates in the generator order (E_ij, I, H_i) at anchor y."""
        n = self.n
        return np.array([self.A[i, j] for i, j in skew_pairs(n)] + [self.lam] + list(self.b), dtype=float)

    def reanchor(self, y2) -> "VElement":
        """Same field written at anchor y2: H_i(x-y) = H_i(x-y2) + H_i(y2-y)."""
        n = self.n
        shift = sum(float(self.b[i]) * h_matrix(i, np.asarray(y2, float) - np.asarray(self.y, float))
                    for i in range(n))
        M = np.asarray(self.A, float) + float(self.lam) * np.eye(n) + shift
        lam2 = np.trace(M) / n
        A2 = M - lam2 * np.eye(n)
        return VElement(A2, lam2, np.asarray(self.b, float), np.asarray(y2, float))


def sigma_basis(n: int, y=None) -> list[SigmaElement]:
    """Basis a = e_k, A = E_ij, lam = 1, b = e_k of Sigma (length (n+1)(n+2)/2)."""
    y = np.zeros(n, dtype=object) if y is None else np.asarray(y)
    zero_v = np.zeros(n, dtype=object)
    zero_m = np.zeros((n, n), dtype=object)
    out = []
    for k in range(n):
        a = zero_v.copy()
        a[k] = 1
        out.append(SigmaElement(a, zero_m, 0, zero_v, y))
    for i, j in skew_pairs(n):
        A = zero_m.copy()
        A[i, j] = 1
        A[j, i] = -1
        out.append(SigmaElement(zero_v, A, 0, zero_v, y))
    out.append(SigmaElement(zero_v, zero_m, 1, zero_v, y))
    for k in range(n):
        b = zero_v.copy()
        b[k] = 1
        out.append(SigmaElement(zero_v, zero_m, 0, b, y))
    return out


def _coef_vector(P: np.ndarray, degree: int) -> np.ndarray:
    n = next(iter(P.flat)).n
    mons = monomials(n, degree)
    return np.array([float(p.terms.get(e, 0)) for p in P.flat for e in mons])


def kernel_dimensions(n: int) -> dict:
    """Ranks of the Sigma basis (as vector polynomials) and of its differentials."""
    basis = sigma_basis(n)
    S = np.array([_coef_vector(w.as_poly(), 2) for w in basis])
    Dm = np.array([_coef_vector(poly_gradient(w.as_poly()), 1) for w in basis])
    return {
        "sigma_rank": int(np.linalg.matrix_rank(S)),
        "sigma_dim": sigma_dim(n),
        "v_rank": int(np.linalg.matrix_rank(Dm)),
        "v_dim": v_dim(n),
        "d_sigma_kernel": len(basis) - int(np.linalg.matrix_rank(Dm)),
    }


def anchor_residual(v: VElement, y2, rng: np.random.Generator, samples: int = 64) -> float:
    """Least-squares re-coordinatization of v at anchor y2; relative residual."""
    n = v.n
    x = rng.standard_normal((samples, n))
    target = v(x).reshape(samples, -1)
    G = v_generators(x, y2).reshape(v_dim(n), samples, -1)
    M = G.transpose(1, 2, 0).reshape(-1, v_dim(n))
    c, *_ = np.linalg.lstsq(M, target.reshape(-1), rcond=None)
    r = M @ c - target.reshape(-1)
    return float(np.linalg.norm(r) / max(np.linalg.norm(target), 1e-300))


# ---------------------------------------------------------------------------
# weighted bases and splitting
# ---------------------------------------------------------------------------
@dataclass
class VBasis:
    """Orthonormal basis psi_j of V in the rho^{p beta}-weighted inner product
    on the nodes of a mesh (or a subset of them)."""

    psi: np.ndarray        # (m, N, n, n) nodal values
    coef: np.ndarray       # psi = coef @ generators
    p: float
    beta: float
    gram: np.ndarray       # Gram matrix of the raw generators
    cond: float
    origin: np.ndarray
    weight: np.ndarray     # w * rho^{p beta} per node

    @property
    def m(self) -> int:
        return len(self.psi)

    def inner(self) -> np.ndarray:
        P = self.psi.reshape(self.m, len(self.weight), -1)
        return np.einsum("inx,jnx,n->ij", P, P, self.weight)

    def evaluate(self, x) -> np.ndarray:
        g = v_generators(x, self.origin)
        return np.tensordot(self.coef, g, axes=1)


def orthonormalize_v_basis(mesh: QuadMesh, p: float = 2.0, beta: float = 0.0, nodes=None,
                           origin=None, max_cond: float = 1e14) -> VBasis:
    """Modified Gram-Schmidt (two passes) of E_ij, I, H_1..H_n in
    <psi, phi> = int psi : phi rho^{p beta}."""
    idx = np.arange(len(mesh)) if nodes is None else np.asarray(nodes)
    x = mesh.x[idx]
    if origin is None:
        origin = np.average(mesh.x, axis=0, weights=mesh.w)
    wt = mesh.w[idx].astype(float)
    if beta:
        wt = wt * mesh.rho()[idx] ** (p * beta)
    G = v_generators(x, origin)
    m = len(G)
    flat = G.reshape(m, len(idx), -1)
    gram = np.einsum("inx,jnx,n->ij", flat, flat, wt)
    ev = np.linalg.eigvalsh(gram)
    cond = float(ev[-1] / ev[0]) if ev[0] > 0 else np.inf
    if not np.isfinite(cond) or cond > max_cond:
        raise GramError("numerically singular generator Gram matrix", cond)
    Q = flat.copy()
    C = np.eye(m)
    for j in range(m):
        for _ in range(2):
            for k in range(j):
                r = np.einsum("nx,nx,n->", Q[k], Q[j], wt)
                Q[j] -= r * Q[k]
                C[j] -= r * C[k]
        nr = np.sqrt(np.einsum("nx,nx,n->", Q[j], Q[j], wt))
        Q[j] /= nr
        C[j] /= nr
    return VBasis(psi=Q.reshape(G.shape), coef=C, p=p, beta=beta, gram=gram, cond=cond,
                  origin=np.asarray(origin, float), weight=wt)


@dataclass
class SplitResult:
    h: np.ndarray
    alpha: np.ndarray
    residual: float           # max |int h : phi_j| over generators
    C1: float                 # rigorous form (int |psi|^q rho^{p beta})^{1/q}
    C1_displayed: float       # form with ||psi||_{L^q(rho^beta)}
    coef_bound_ok: bool
    F_norm: float
    h_norm: float


def split_W_plus_V(F: np.ndarray, basis: VBasis, mesh: QuadMesh, q: float | None = None) -> SplitResult:
    """F = h + rho^{p beta} sum_j alpha_j psi_j with alpha_j = int F : psi_j."""
    p, beta = basis.p, basis.beta
    if q is None:
        q = p / (p - 1)
    w = mesh.w
    rho = mesh.rho() if beta else np.ones(len(w))
    m = basis.m
    alpha = np.array([np.dot(w, frob(F, basis.psi[j])) for j in range(m)])
    rpb = rho ** (p * beta)
    h = F - rpb[:, None, None] * np.tensordot(alpha, basis.psi, axes=1)
    gens = v_generators(mesh.x, basis.origin)
    pair = np.array([np.dot(w, frob(h, g)) for g in gens])
    scale = max(np.dot(w, entrywise_norm_r(F, 1)), 1e-300) * max(np.abs(gens).max(), 1.0)
    Fn = weighted_Lq_norm(F, w, rho, q, beta, -1)
    hn = weighted_Lq_norm(h, w, rho, q, beta, -1)
    psi_p = np.array([weighted_Lq_norm(basis.psi[j], w, rho, p, beta, +1) for j in range(m)])
    # || rho^{p beta} psi ||_{L^q(rho^-beta)} = (int |psi|^q rho^{p beta})^{1/q}
    psi_q_rig = np.array([(np.dot(w * rpb, entrywise_norm_r(basis.psi[j], q) ** q)) ** (1 / q)
                          for j in range(m)])
    psi_q_disp = np.array([weighted_Lq_norm(basis.psi[j], w, rho, q, beta, +1) for j in range(m)])
    ok = bool(np.all(np.abs(alpha) <= Fn * psi_p * (1 + 1e-10) + 1e-300))
    return SplitResult(h=h, alpha=alpha, residual=float(np.abs(pair).max() / scale),
                       C1=float(1 + np.dot(psi_p, psi_q_rig)),
                       C1_displayed=float(1 + np.dot(psi_p, psi_q_disp)),
                       coef_bound_ok=ok, F_norm=Fn, h_norm=hn)


class TruncationError(RuntimeError):
    def __init__(self, message, achievable):
        super().__init__(f"{message}; smallest achievable tail norm {achievable:.3e}")
        self.achievable = achievable


@dataclass
class TruncationResult:
    g: np.ndarray
    cubes: np.ndarray          # Omega_eps as a set of extended cubes
    tail_norm: float
    error: float               # ||h - g||_{L^q(rho^-beta)}
    bound: float               # eps-form bound with the measured tail norm
    bound_eps: float           # bound at the requested eps
    residual: float


def truncate_to_W0(h: np.ndarray, mesh: QuadMesh, epsilon: float, Q_cube: int, p: float = 2.0,
                   beta: float = 0.0, cube_order=None) -> TruncationResult:
    """Cut h in W down to finitely many extended cubes and restore
    orthogonality to V with a correction supported in the Whitney cube Q.

    Omega_eps grows through ``cube_order`` (default: coarse to fine levels,
    then by distance to Q) until the tail norm drops below epsilon.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    q = p / (p - 1)
    cov = mesh.cover
    w = mesh.w
    rho = mesh.rho() if beta else np.ones(len(w))
    if cube_order is None:
        d = np.linalg.norm(cov.center - cov.center[Q_cube], axis=1)
        cube_order = np.lexsort((d, cov.levels))
    cube_order = np.asarray(cube_order)
    cube_order = np.concatenate([[Q_cube], cube_order[cube_order != Q_cube]])
    # tail norms for every prefix, from the first time a node is covered
    first = np.full(len(w), len(cube_order), dtype=np.int64)
    rank = np.empty(len(cov), dtype=np.int64)
    rank[cube_order] = np.arange(len(cube_order))
    np.minimum.at(first, mesh.pair_node, rank[mesh.pair_t])
    dens = w * entrywise_norm_r(h, q) ** q * rho ** (-q * beta)
    covered = np.bincount(first, weights=dens, minlength=len(cube_order) + 1)
    tail = np.maximum(dens.sum() - np.cumsum(covered), 0.0) ** (1 / q)
    ok = np.flatnonzero(tail[:-1] < epsilon)
    if len(ok) == 0:
        raise TruncationError("cannot shrink the tail below epsilon", float(tail[:-1].min()))
    k = int(ok[0])
    inside = first <= k
    qnodes = np.flatnonzero(mesh.node_q == Q_cube)
    nu = orthonormalize_v_basis(mesh, p, beta, nodes=qnodes)
    g = np.where(inside[:, None, None], h, 0.0)
    tail_nodes = ~inside
    gens_tail = nu.evaluate(mesh.x[tail_nodes])
    coeff = np.array([np.dot(w[tail_nodes], frob(h[tail_nodes], gens_tail[i])) for i in range(nu.m)])
    corr = np.tensordot(coeff, nu.psi, axes=1) * (rho[qnodes] ** (p * beta))[:, None, None]
    g[qnodes] += corr
    err = weighted_Lq_norm(h - g, w, rho, q, beta, -1)
    nu_full = nu.evaluate(mesh.x)
    nu_p = np.array([weighted_Lq_norm(nu_full[i], w, rho, p, beta, +1) for i in range(nu.m)])
    nu_q = np.array([(np.dot(w[qnodes] * rho[qnodes] ** (p * beta),
                             entrywise_norm_r(nu.psi[i], q) ** q)) ** (1 / q) for i in range(nu.m)])
    factor = 1 + float(np.dot(nu_p, nu_q))
    gens = v_generators(mesh.x, nu.origin)
    pair = np.array([np.dot(w, frob(g, gg)) for gg in gens])
    scale = max(np.dot(w, entrywise_norm_r(h, 1)), 1e-300) * max(np.abs(gens).max(), 1.0)
    return TruncationResult(g=g, cubes=np.sort(cube_order[:k + 1]), tail_norm=float(tail[k]),
                            error=err, bound=float(tail[k]) * factor, bound_eps=epsilon * factor,
                            residual=float(np.abs(pair).max() / scale))


def project_out_v(F: np.ndarray, mesh: QuadMesh, nodes=None, origin=None) -> np.ndarray:
    """Unweighted L^2 projection of F off V on the given nodes (F in W after)."""
    idx = np.arange(len(mesh)) if nodes is None else np.asarray(nodes)
    basis = orthonormalize_v_basis(mesh, 2.0, 0.0, nodes=idx, origin=origin)
    out = F.copy()
    sub = out[idx]
    for j in range(basis.m):
        c = np.dot(mesh.w[idx], frob(sub, basis.psi[j]))
        sub = sub - c * basis.psi[j]
    out[idx] = sub
    return out
