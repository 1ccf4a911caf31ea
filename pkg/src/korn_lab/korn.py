"""Discrete conformal Korn constants with multilinear (Q1) elements.

For p = 2 the constant is the square root of

    max  a(v, v) / b(v, v),   a(v, v) = int |Dv - P_V Dv|^2 rho^{2 beta},
                              b(v, v) = int |l(v)|^2 rho^{2 beta},

where P_V is the rho^{2 beta}-weighted L^2 projection onto V.  The linear
part of Sigma (translations, rotations, dilation) is represented exactly by
Q1 fields and spans the null space of b; it is removed by pinning dofs.  The
three quadratic Sigma fields are only interpolated; their interpolants have
b = O(h^2) and are removed by b-orthogonality constraints.

On a cube the three midplane reflections commute with the problem, so the
eigenproblem splits into 8 parity sectors that are solved separately.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from fractions import Fraction

from .conformal import SigmaElement, sigma_basis, trace_free_strain, v_generators
from .fields import poly_gradient
from .geometry import BoxUnion, Domain


class DeflationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# grid and reference element
# ---------------------------------------------------------------------------
@dataclass
class GridMesh:
    """Uniform grid of Q1 elements covering a box union exactly."""

    lo: np.ndarray
    h: float
    shape: tuple                 # elements per axis of the bounding grid
    elements: np.ndarray         # (E, n) element grid indices
    nodes: np.ndarray            # (Nn, n) node grid indices
    enodes: np.ndarray           # (E, 2^n) node ids
    domain: Domain | None = None

    @property
    def n(self) -> int:
        return self.nodes.shape[1]

    @property
    def X(self) -> np.ndarray:
        return self.lo + self.h * self.nodes

    @property
    def ndof(self) -> int:
        return self.n * len(self.nodes)

    @property
    def center(self) -> np.ndarray:
        return self.lo + 0.5 * self.h * np.asarray(self.shape)

    @property
    def length(self) -> float:
        return self.h * max(self.shape)

    def interpolate(self, fn) -> np.ndarray:
        """Nodal interpolant of a vector field, as a dof vector."""
        return np.asarray(fn(self.X), dtype=float).reshape(-1)

    def volume(self) -> float:
        return len(self.elements) * self.h ** self.n


def grid_mesh(domain: Domain, h: float) -> GridMesh:
    lo = np.asarray(domain.lo, dtype=float)
    hi = np.asarray(domain.hi, dtype=float)
    shape = np.rint((hi - lo) / h).astype(int)
    if np.any(np.abs(shape * h - (hi - lo)) > 1e-9 * max(1.0, float(np.max(hi - lo)))):
        raise ValueError("mesh size must divide the bounding box")
    if isinstance(domain, BoxUnion):
        for a, b in zip(domain.in_lo, domain.in_hi):
            r = (np.asarray([a, b]) - lo) / h
            if np.any(np.abs(r - np.rint(r)) > 1e-9):
                raise ValueError("mesh is not aligned with the box faces")
    n = len(lo)
    el = np.array(list(itertools.product(*[range(s) for s in shape])), dtype=np.int64)
    centers = lo + h * (el + 0.5)
    el = el[domain.contains(centers)]
    corners = np.array(list(itertools.product([0, 1], repeat=n)), dtype=np.int64)
    allnodes = (el[:, None, :] + corners[None]).reshape(-1, n)
    stride = np.cumprod([1] + [s + 1 for s in shape[::-1]])[:-1][::-1]
    keys = allnodes @ stride
    uk, inv = np.unique(keys, return_inverse=True)
    nodes = np.stack(np.unravel_index(uk, [s + 1 for s in shape]), 1)
    return GridMesh(lo=lo, h=float(h), shape=tuple(int(s) for s in shape), elements=el,
                    nodes=nodes, enodes=inv.reshape(len(el), len(corners)), domain=domain)


def cube_mesh(N: int, lo=(0.0, 0.0, 0.0), L: float = 1.0) -> GridMesh:
    from .geometry import axis_box
    lo = np.asarray(lo, dtype=float)
    return grid_mesh(axis_box(lo, lo + L), L / N)


def _reference(n: int, order: int = 2):
    """Gauss points, weights, shape values (nq, 2^n) and reference gradients
    (nq, 2^n, n) on the unit cube."""
    g, w = np.polynomial.legendre.leggauss(order)
    g = 0.5 * (g + 1)
    w = 0.5 * w
    qp = np.array(list(itertools.product(g, repeat=n)))
    qw = np.prod(np.array(list(itertools.product(w, repeat=n))), axis=1)
    corners = np.array(list(itertools.product([0, 1], repeat=n)))
    fac = np.where(corners[None, :, :] == 1, qp[:, None, :], 1 - qp[:, None, :])   # (nq, a, k)
    Nv = fac.prod(-1)
    sgn = np.where(corners == 1, 1.0, -1.0)
    dN = np.empty((len(qp), len(corners), n))
    for d in range(n):
        others = np.delete(fac, d, axis=2).prod(-1)
        dN[:, :, d] = sgn[None, :, d] * others
    return qp, qw, Nv, dN


def _grad_operator(dN: np.ndarray, h: float) -> np.ndarray:
    """G_q with vec(Dv)(row-major j,k) = G_q @ local dofs (a*n + j)."""
    nq, na, n = dN.shape
    G = np.zeros((nq, n * n, na * n))
    for j in range(n):
        for k in range(n):
            G[:, j * n + k, np.arange(na) * n + j] = dN[:, :, k] / h
    return G


def strain_projector(n: int) -> np.ndarray:
    """L with vec(l(M)) = L vec(M)."""
    L = np.zeros((n * n, n * n))
    for j in range(n):
        for k in range(n):
            M = np.zeros((n, n))
            M[j, k] = 1.0
            S = 0.5 * (M + M.T) - np.trace(M) / n * np.eye(n)
            L[:, j * n + k] = S.ravel()
    return L


def sym_projector(n: int) -> np.ndarray:
    L = np.zeros((n * n, n * n))
    for j in range(n):
        for k in range(n):
            M = np.zeros((n, n))
            M[j, k] = 1.0
            L[:, j * n + k] = (0.5 * (M + M.T)).ravel()
    return L


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------
@dataclass
class Forms:
    mesh: GridMesh
    beta: float
    K: sp.csr_matrix            # int Dv : Dv rho^{2b}
    B: sp.csr_matrix            # int |l(v)|^2 rho^{2b}
    C: np.ndarray               # (ndof, m) pairings with a weighted orthonormal basis of V
    M: sp.csr_matrix | None = None
    Eps: sp.csr_matrix | None = None
    Div: sp.csr_matrix | None = None
    extras: dict = field(default_factory=dict)

    def a_form(self, v: np.ndarray) -> float:
        return float(v @ (self.K @ v) - np.sum((self.C.T @ v) ** 2))

    def b_form(self, v: np.ndarray) -> float:
        return float(v @ (self.B @ v))


def _weights(mesh: GridMesh, beta: float, qp, qw):
    """Per element and quadrature point: w h^n rho^{2 beta} (E, nq), and the points."""
    X = mesh.lo + mesh.h * (mesh.elements[:, None, :] + qp[None])
    W = np.broadcast_to(qw * mesh.h ** mesh.n, X.shape[:2]).copy()
    if beta:
        rho = mesh.domain.distance(X.reshape(-1, mesh.n)).reshape(X.shape[:2])
        W *= rho ** (2 * beta)
    return W, X


def assemble(mesh: GridMesh, beta: float = 0.0, mass: bool = False, strain: bool = False,
             order: int = 2) -> Forms:
    n = mesh.n
    qp, qw, Nv, dN = _reference(n, order)
    G = _grad_operator(dN, mesh.h)                     # (nq, n^2, nd)
    L = strain_projector(n)
    nd = G.shape[2]
    dofs = (mesh.enodes[:, :, None] * n + np.arange(n)).reshape(len(mesh.elements), nd)
    I = np.repeat(dofs, nd, axis=1).ravel()
    J = np.tile(dofs, (1, nd)).ravel()
    W, X = _weights(mesh, beta, qp, qw)
    shape = (mesh.ndof, mesh.ndof)

    def build(local):                                  # local (nq, nd, nd)
        if beta:
            vals = (W @ local.reshape(len(qp), -1)).ravel()
        else:
            vals = np.tile((W[0] @ local.reshape(len(qp), -1)), len(mesh.elements))
        return sp.csr_matrix((vals, (I, J)), shape=shape)

    GK = np.einsum("qai,qaj->qij", G, G)
    LG = np.einsum("ab,qbj->qaj", L, G)
    GB = np.einsum("qai,qaj->qij", LG, LG)
    forms = Forms(mesh=mesh, beta=beta, K=build(GK), B=build(GB), C=np.zeros((mesh.ndof, 0)))
    if strain:
        S = sym_projector(n)
        SG = np.einsum("ab,qbj->qaj", S, G)
        forms.Eps = build(np.einsum("qai,qaj->qij", SG, SG))
        tr = G[:, [j * n + j for j in range(n)], :].sum(1)
        forms.Div = build(np.einsum("qi,qj->qij", tr, tr))
    if mass:
        Nm = np.zeros((len(qp), n, nd))
        for j in range(n):
            Nm[:, j, np.arange(Nv.shape[1]) * n + j] = Nv
        forms.M = build(np.einsum("qai,qaj->qij", Nm, Nm))
    # weighted orthonormal basis of V at the quadrature points
    origin = mesh.center
    gens = v_generators(X.reshape(-1, n), origin).reshape(-1, len(X), len(qp), n * n)   # (m, E, nq, n^2)
    Wf = W
    gram = np.einsum("meqx,keqx,eq->mk", gens, gens, Wf)
    R = np.linalg.cholesky(gram)
    Rinv = np.linalg.inv(R)
    psi = np.einsum("km,meqx->keqx", Rinv, gens)
    # C[:, j] = int D(phi) : psi_j rho^{2b}
    loc = np.einsum("qxd,keqx,eq->ked", G, psi, Wf)     # (m, E, nd)
    C = np.zeros((mesh.ndof, len(psi)))
    for j in range(len(psi)):
        C[:, j] = np.bincount(dofs.ravel(), weights=loc[j].ravel(), minlength=mesh.ndof)
    forms.C = C
    forms.extras["gram_cond"] = float(np.linalg.cond(gram))
    return forms


def sigma_interpolants(mesh: GridMesh) -> tuple[np.ndarray, np.ndarray]:
    """Nodal interpolants of the Sigma basis in local coordinates (x - c)/L:
    (linear part: translations, rotations, dilation; quadratic part)."""
    n = mesh.n
    c = mesh.center
    L = mesh.length
    lin, quad = [], []
    for w in sigma_basis(n):
        v = mesh.interpolate(lambda X: SigmaElement(w.a, w.A, w.lam, w.b, np.zeros(n))((X - c) / L))
        (quad if np.any(w.b != 0) else lin).append(v)
    return np.array(lin).T, np.array(quad).T


# ---------------------------------------------------------------------------
# constrained generalized eigenproblem
# ---------------------------------------------------------------------------
@dataclass
class EigResult:
    mu: float
    vector: np.ndarray          # free-dof vector
    residual: float
    free: np.ndarray
    pins: np.ndarray
    n_constraints: int
    ndof: int


def max_rayleigh(A, B: sp.spmatrix, Zlin: np.ndarray, Zquad: np.ndarray, k: int = 3,
                 tol: float = 1e-12) -> EigResult:
    """max a/b over {v : v has pinned dofs zero, (B zq)^T v = 0 for quadratic zq}.

    ``A`` is a sparse matrix or a callable x -> A x on the full space; the
    pins remove span(Zlin), which must be the exact null space of B.
    """
    nd = B.shape[0]
    r = Zlin.shape[1]
    if r:
        _, _, piv = sla.qr(Zlin.T, mode="economic", pivoting=True)
        pins = np.sort(piv[:r])
        sv = np.linalg.svd(Zlin[pins], compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise DeflationError("pinned rows do not determine the kernel component")
    else:
        pins = np.zeros(0, dtype=np.int64)
    free = np.setdiff1d(np.arange(nd), pins)
    Bf = B[free][:, free].tocsc()
    Zc = (B @ Zquad)[free] if Zquad.shape[1] else np.zeros((len(free), 0))
    if Zc.shape[1]:
        nrm = np.linalg.norm(Zc, axis=0)
        Zc = Zc[:, nrm > 1e-12 * max(nrm.max(), 1e-300)]
    lu = spla.splu(Bf, permc_spec="MMD_AT_PLUS_A")
    if Zc.shape[1]:
        U = lu.solve(Zc)
        S = np.linalg.inv(Zc.T @ U)
        proj = lambda x: x - U @ (S @ (Zc.T @ x))
        projT = lambda x: x - Zc @ (S.T @ (U.T @ x))
    else:
        proj = projT = lambda x: x

    if callable(A):
        def Af(x):
            y = np.zeros(nd)
            y[free] = x
            return A(y)[free]
    else:
        Ass = A[free][:, free].tocsr()
        Af = lambda x: Ass @ x

    Ahat = spla.LinearOperator((len(free), len(free)), matvec=lambda x: projT(Af(proj(x))), dtype=float)
    Minv = spla.LinearOperator((len(free), len(free)), matvec=lu.solve, dtype=float)
    kk = min(k, len(free) - Zc.shape[1] - 1)
    vals, vecs = spla.eigsh(Ahat, k=max(kk, 1), M=Bf, Minv=Minv, which="LA", tol=tol,
                            v0=np.ones(len(free)))
    i = int(np.argmax(vals))
    v = vecs[:, i]
    mu = float(vals[i])
    Av = Ahat @ v
    res = float(np.linalg.norm(Av - mu * (Bf @ v)) / max(np.linalg.norm(Av), 1e-300))
    return EigResult(mu=mu, vector=v, residual=res, free=free, pins=pins,
                     n_constraints=int(Zc.shape[1]), ndof=nd)


def sector_maps(mesh: GridMesh):
    """Extension matrices from half-grid dofs to full dofs for the 8 (2^n)
    reflection parity sectors of a cube mesh with an even number of elements
    per side.  In sector sigma, v(R_k x) = sigma_k R_k v(x)."""
    n = mesh.n
    Ns = set(mesh.shape)
    if len(Ns) != 1 or len(mesh.elements) != np.prod(mesh.shape) or mesh.shape[0] % 2:
        raise ValueError("parity sectors need a full cube grid with an even number of elements")
    N = mesh.shape[0]
    H = N // 2
    nn = N + 1
    stride = np.array([nn ** (n - 1 - i) for i in range(n)])
    # node id lookup (grid order == lexicographic for a full cube)
    gid = mesh.nodes @ stride
    lookup = np.empty(nn ** n, dtype=np.int64)
    lookup[gid] = np.arange(len(gid))
    half = np.array(list(itertools.product(range(H + 1), repeat=n)))
    out = []
    for sig in itertools.product([1, -1], repeat=n):
        rows, cols, vals = [], [], []
        col = 0
        for node in half:
            for j in range(n):
                if any(node[k] == H and ((j != k and sig[k] == -1) or (j == k and sig[k] == 1))
                       for k in range(n)):
                    continue
                imgs = {}
                for r in itertools.product([0, 1], repeat=n):
                    im = node.copy()
                    f = 1
                    for k in range(n):
                        if r[k]:
                            im[k] = N - node[k]
                            f *= sig[k] * (-1 if j == k else 1)
                    imgs[int(lookup[im @ stride]) * n + j] = f
                for dof, f in imgs.items():
                    rows.append(dof)
                    cols.append(col)
                    vals.append(f)
                col += 1
        E = sp.csr_matrix((np.array(vals, float), (rows, cols)), shape=(mesh.ndof, col))
        out.append((sig, E))
    return out


def _restrict_modes(E: sp.spmatrix, Z: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Sector coordinates of the columns of Z that lie in range(E)."""
    if Z.shape[1] == 0:
        return np.zeros((E.shape[1], 0))
    d = np.asarray((E.T @ E).diagonal()).ravel()
    S = (E.T @ Z) / d[:, None]
    keep = np.linalg.norm(E @ S - Z, axis=0) <= tol * np.linalg.norm(Z, axis=0)
    return S[:, keep]


@dataclass
class KornReport:
    C: float
    mu: float
    h: float
    N: int
    beta: float
    p: int
    residual: float
    deflation_dim: int
    sectors: list
    seconds: float
    ndof: int

    def to_dict(self) -> dict:
        return {"C": self.C, "mu": self.mu, "h": self.h, "N": self.N, "beta": self.beta, "p": self.p,
                "residual": self.residual, "deflation_dim": self.deflation_dim,
                "sectors": self.sectors, "ndof": self.ndof}


def korn_constant(domain: Domain, h: float, beta: float = 0.0, symmetry: str = "auto",
                  tol: float = 1e-12) -> KornReport:
    """C(h) for p = 2.  ``symmetry``: 'auto' uses parity sectors on cube
    meshes with beta = 0 or on cubes (rho is reflection invariant there)."""
    t0 = time.perf_counter()
    mesh = grid_mesh(domain, h)
    forms = assemble(mesh, beta)
    Zlin, Zq = sigma_interpolants(mesh)
    kern = np.abs(forms.B @ Zlin).max() / max(abs(forms.B).max(), 1e-300) if Zlin.size else 0.0
    if kern > 1e-9:
        raise DeflationError(f"linear Sigma interpolants are not in the kernel of b ({kern:.2e})")
    use_sectors = symmetry == "sectors" or (
        symmetry == "auto" and len(set(mesh.shape)) == 1 and mesh.shape[0] % 2 == 0
        and len(mesh.elements) == np.prod(mesh.shape))
    sectors = []
    if use_sectors:
        best = None
        for sig, E in sector_maps(mesh):
            Ks = (E.T @ forms.K @ E).tocsr()
            Bs = (E.T @ forms.B @ E).tocsr()
            Cs = E.T @ forms.C
            zl = _restrict_modes(E, Zlin)
            zq = _restrict_modes(E, Zq)
            A = lambda x, Ks=Ks, Cs=Cs: Ks @ x - Cs @ (Cs.T @ x)
            r = max_rayleigh(A, Bs, zl, zq, tol=tol)
            sectors.append({"sigma": list(sig), "mu": r.mu, "residual": r.residual, "ndof": E.shape[1],
                            "pins": len(r.pins), "constraints": r.n_constraints})
            if best is None or r.mu > best.mu:
                best = r
        res = max(s["residual"] for s in sectors)
        defl = sum(s["pins"] + s["constraints"] for s in sectors)
    else:
        A = lambda x: forms.K @ x - forms.C @ (forms.C.T @ x)
        best = max_rayleigh(A, forms.B, Zlin, Zq, tol=tol)
        res = best.residual
        defl = len(best.pins) + best.n_constraints
    N = int(max(mesh.shape))
    return KornReport(C=float(np.sqrt(best.mu)), mu=best.mu, h=float(h), N=N, beta=beta, p=2,
                      residual=res, deflation_dim=defl, sectors=sectors,
                      seconds=time.perf_counter() - t0, ndof=mesh.ndof)


def deflation_spectrum(mesh: GridMesh, k: int = 14) -> np.ndarray:
    """Smallest eigenvalues of b against the mass matrix (shift-invert)."""
    forms = assemble(mesh, 0.0, mass=True)
    vals = spla.eigsh(forms.B.tocsc(), k=k, M=forms.M.tocsc(), sigma=-1e-3, which="LM",
                      return_eigenvectors=False)
    return np.sort(vals)


def gradient_at(mesh: GridMesh, v: np.ndarray, x) -> np.ndarray:
    """Dv of the Q1 field at points x (N, n) inside the mesh, shape (N, n, n)."""
    n = mesh.n
    x = np.atleast_2d(np.asarray(x, float))
    r = (x - mesh.lo) / mesh.h
    el = np.floor(r).astype(np.int64)
    loc = r - el
    keys = {tuple(e): i for i, e in enumerate(mesh.elements)}
    ids = np.array([keys[tuple(e)] for e in el])
    corners = np.array(list(itertools.product([0, 1], repeat=n)))
    V = v.reshape(-1, n)[mesh.enodes[ids]]            # (N, 2^n, n)
    out = np.zeros((len(x), n, n))
    for a, c in enumerate(corners):
        fac = np.where(c[None] == 1, loc, 1 - loc)
        for d in range(n):
            g = np.prod(np.delete(fac, d, 1), 1) * (1 if c[d] else -1) / mesh.h
            out[:, :, d] += V[:, a, :] * g[:, None]
    return out


def value_at(mesh: GridMesh, v: np.ndarray, x) -> np.ndarray:
    n = mesh.n
    x = np.atleast_2d(np.asarray(x, float))
    r = (x - mesh.lo) / mesh.h
    el = np.minimum(np.floor(r).astype(np.int64), np.asarray(mesh.shape) - 1)
    loc = r - el
    keys = {tuple(e): i for i, e in enumerate(mesh.elements)}
    ids = np.array([keys[tuple(e)] for e in el])
    corners = np.array(list(itertools.product([0, 1], repeat=n)))
    V = v.reshape(-1, n)[mesh.enodes[ids]]
    out = np.zeros((len(x), n))
    for a, c in enumerate(corners):
        out += V[:, a, :] * np.prod(np.where(c[None] == 1, loc, 1 - loc), 1)[:, None]
    return out


def strain_identity_check(v, lo, hi) -> dict:
    """||l||^2 = ||eps||^2 - ||div||^2 / n for a polynomial field v (array of
    Poly) on the box [lo, hi], integrated exactly."""
    n = len(v)
    D = poly_gradient(v)
    Lm = trace_free_strain(v)
    div = D[0, 0]
    for k in range(1, n):
        div = div + D[k, k]
    l2 = e2 = 0
    for j in range(n):
        for k in range(n):
            e = (D[j, k] + D[k, j]) * Fraction(1, 2)
            l2 += (Lm[j, k] * Lm[j, k]).integrate_box(lo, hi)
            e2 += (e * e).integrate_box(lo, hi)
    d2 = (div * div).integrate_box(lo, hi)
    gap = l2 - e2 + d2 * Fraction(1, n)
    res = abs(gap) / e2 if e2 else abs(gap)
    return {"l2": l2, "eps2": e2, "div2": d2, "residual": float(res)}


def strain_forms_gap(forms: Forms) -> float:
    """max |Eps - B - Div/n| / max|Eps| on assembled matrices (zero up to
    round-off), so ||l(v)|| <= ||eps(v)|| holds for every discrete v."""
    G = forms.Eps - forms.B - forms.Div / forms.mesh.n
    return float(abs(G).max() / abs(forms.Eps).max())


# ---------------------------------------------------------------------------
# corollary scans
# ---------------------------------------------------------------------------
def trig_family(n: int, count: int, rng: np.random.Generator, modes: int = 2):
    """Random smooth vector fields sum_k a_k cos(pi k.x + phase_k), k in
    {0..modes}^n, amplitudes decaying with |k|.  Mesh independent."""
    ks = np.array(list(itertools.product(range(modes + 1), repeat=n)), dtype=float)
    amp = 1.0 / (1.0 + (ks ** 2).sum(1))
    coefs = rng.standard_normal((count, len(ks), n)) * amp[None, :, None]
    phases = rng.uniform(0, 2 * np.pi, size=(count, len(ks)))

    def field(i):
        def f(X):
            arg = np.pi * X @ ks.T + phases[i][None]
            return np.cos(arg) @ coefs[i]
        return f
    return [field(i) for i in range(count)]


@dataclass
class CorollaryReport:
    h: float
    reshetnyak_sup: float
    dain_sup: float
    sigma_numerator_max: float
    sigma_norm_ratio_sampled: float
    sigma_norm_ratio_exact: float
    eigen_sup: float | None


def sigma_projection_checks(domain: Domain, h: float, count: int = 200, seed: int = 0,
                            eigen: bool = False) -> CorollaryReport:
    """Reshetnyak-form ratio ||v - Pi v||_{H^1} / ||l(v)|| and Dain-form ratio
    ||v||_{H^1} / (||v|| + ||l(v)||) over a random smooth family, with Pi the
    L^2 projection onto the interpolated Sigma."""
    mesh = grid_mesh(domain, h)
    forms = assemble(mesh, 0.0, mass=True)
    M, K, B = forms.M, forms.K, forms.B
    Zl, Zq = sigma_interpolants(mesh)
    Z = np.hstack([Zl, Zq])
    MZ = M @ Z
    G = Z.T @ MZ
    Ginv = np.linalg.inv(G)
    proj = lambda v: Z @ (Ginv @ (MZ.T @ v))
    H1 = M + K
    rng = np.random.default_rng(seed)
    fam = trig_family(mesh.n, count, rng)
    r1, r2 = [], []
    for f in fam:
        v = mesh.interpolate(f)
        r = v - proj(v)
        lv = np.sqrt(max(v @ (B @ v), 0.0))
        r1.append(np.sqrt(r @ (H1 @ r)) / lv)
        r2.append(np.sqrt(v @ (H1 @ v)) / (np.sqrt(v @ (M @ v)) + lv))
    # Sigma members: numerator of the first ratio vanishes
    num = 0.0
    for _ in range(10):
        v = Z @ rng.standard_normal(Z.shape[1])
        r = v - proj(v)
        num = max(num, np.sqrt(r @ (H1 @ r)) / np.sqrt(v @ (H1 @ v)))
    # norm equivalence over Sigma
    HZ = Z.T @ (H1 @ Z)
    exact = float(np.sqrt(sla.eigh(HZ, G, eigvals_only=True).max()))
    c = rng.standard_normal((1000, Z.shape[1]))
    samp = np.sqrt(np.einsum("ij,jk,ik->i", c, HZ, c) / np.einsum("ij,jk,ik->i", c, G, c)).max()
    eig = None
    if eigen:
        def A(x):
            r = x - proj(x)
            y = H1 @ r
            return y - MZ @ (Ginv @ (Z.T @ y))
        eig = float(np.sqrt(max_rayleigh(A, B, Zl, Zq).mu))
    return CorollaryReport(h=h, reshetnyak_sup=float(max(r1)), dain_sup=float(max(r2)),
                           sigma_numerator_max=float(num), sigma_norm_ratio_sampled=float(samp),
                           sigma_norm_ratio_exact=exact, eigen_sup=eig)
