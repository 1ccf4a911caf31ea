"""Partition of unity, the tree Hardy operator and the two-stage
V-decomposition of fields orthogonal to V.

Families {g_t} live on the node pairs (node, t) of a ``QuadMesh``: entry k of
a family is the value of g_{pair_t[k]} at node pair_node[k].  Every identity
below (reconstruction, orthogonality, telescoping) is an identity of the
discrete measure and holds to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conformal import constant_generators, constant_normalizers, h_matrix, v_dim, v_generators
from .fields import QuadMesh, entrywise_norm_r, frob, weighted_Lq_norm


class UncoveredNodeError(RuntimeError):
    def __init__(self, nodes):
        super().__init__(f"{len(nodes)} quadrature nodes are not covered by any bump")
        self.nodes = nodes


class NotInW0Error(ValueError):
    def __init__(self, residuals):
        super().__init__(f"field is not orthogonal to V: max relative pairing {np.abs(residuals).max():.3e}")
        self.residuals = residuals


# ---------------------------------------------------------------------------
# partition of unity
# ---------------------------------------------------------------------------
PLATEAU = 7.0 / 16.0
EDGE = 9.0 / 16.0


def bump_profile(r) -> np.ndarray:
    """C^1 cubic profile: 1 for |r| <= 7/16, 0 for |r| >= 9/16."""
    u = np.clip((EDGE - np.abs(r)) / (EDGE - PLATEAU), 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


@dataclass
class PartitionOfUnity:
    mesh: QuadMesh
    phi: np.ndarray      # per pair

    def node_sum(self) -> np.ndarray:
        return np.bincount(self.mesh.pair_node, weights=self.phi, minlength=len(self.mesh))


def partition_of_unity(mesh: QuadMesh) -> PartitionOfUnity:
    """Shepard normalization of tensor bumps on the pairs of the mesh."""
    cov = mesh.cover
    t = mesh.pair_t
    r = (mesh.x[mesh.pair_node] - cov.center[t]) / cov.side[t][:, None]
    b = np.prod(bump_profile(r), axis=1)
    den = np.bincount(mesh.pair_node, weights=b, minlength=len(mesh))
    if np.any(den <= 0):
        raise UncoveredNodeError(np.flatnonzero(den <= 0))
    return PartitionOfUnity(mesh, b / den[mesh.pair_node])


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------
def pair_index(mesh: QuadMesh, node, t) -> np.ndarray:
    """Positions of (node, t) in the pair arrays (-1 when absent)."""
    N = len(mesh)
    key = mesh.pair_t.astype(np.int64) * N + mesh.pair_node
    want = np.asarray(t, dtype=np.int64) * N + np.asarray(node)
    pos = np.searchsorted(key, want)
    pos = np.minimum(pos, len(key) - 1)
    return np.where(key[pos] == want, pos, -1)


def family_sum(mesh: QuadMesh, vals: np.ndarray) -> np.ndarray:
    """sum_t g_t at every node."""
    out = np.zeros((len(mesh),) + vals.shape[1:])
    flat = vals.reshape(len(vals), -1)
    o = out.reshape(len(mesh), -1)
    for j in range(flat.shape[1]):
        o[:, j] = np.bincount(mesh.pair_node, weights=flat[:, j], minlength=len(mesh))
    return out


def family_pairings(mesh: QuadMesh, vals: np.ndarray, gens: np.ndarray) -> np.ndarray:
    """int g_t : gen_j for every t and generator; gens has shape (k, N, n, n)
    (or (k, n, n) for constants).  Returns (T, k)."""
    w = mesh.w[mesh.pair_node]
    T = len(mesh.cover)
    out = np.zeros((T, len(gens)))
    for j, G in enumerate(gens):
        gv = G if G.ndim == 2 else G[mesh.pair_node]
        out[:, j] = np.bincount(mesh.pair_t, weights=w * frob(vals, gv), minlength=T)
    return out


def _b_pairs(mesh: QuadMesh):
    """For every node in some B_s: node, s, and pair positions of (node, s)
    and (node, parent(s))."""
    if "bpairs" in mesh._cache:
        return mesh._cache["bpairs"]
    nb = mesh.node_b
    nodes = np.flatnonzero(nb >= 0)
    s = nb[nodes]
    ps = mesh.tree.parent[s]
    own = pair_index(mesh, nodes, s)
    par = pair_index(mesh, nodes, ps)
    if np.any(own < 0) or np.any(par < 0):
        raise RuntimeError("overlap cube node missing from an extended cube")
    mesh._cache["bpairs"] = (nodes, s, own, par)
    return mesh._cache["bpairs"]


def _transfer(mesh: QuadMesh, vals: np.ndarray, hb: np.ndarray) -> np.ndarray:
    """g_t + sum_{children} h_s - h_t with h given at B nodes (aligned with _b_pairs)."""
    nodes, s, own, par = _b_pairs(mesh)
    out = vals.copy()
    np.subtract.at(out, own, hb)
    np.add.at(out, par, hb)
    return out


@dataclass
class StageResult:
    g: np.ndarray           # family values per pair
    h: np.ndarray           # transferred field at B nodes (aligned with _b_pairs)
    coeff: np.ndarray       # (T, k) shadow pairings per node
    subtree: np.ndarray     # alias of coeff; kept for reports


def decompose_stage_one(mesh: QuadMesh, f: np.ndarray) -> StageResult:
    """Constant generators: h_s = sum_i (int A_i : sum_{k>=s} f_k) A_{i,s}."""
    n = mesh.n
    A = constant_generators(n)
    norm = constant_normalizers(n)
    p = family_pairings(mesh, f, A)
    S = mesh.tree.subtree_sum(p)
    nodes, s, own, par = _b_pairs(mesh)
    bvol = mesh.b_volume()
    coef = S[s] / (norm[None, :] * bvol[s][:, None])
    hb = np.tensordot(coef, A, axes=1)
    return StageResult(g=_transfer(mesh, f, hb), h=hb, coeff=S, subtree=S)


def theta_denominators(mesh: QuadMesh) -> np.ndarray:
    """int_{B_s} H_i(z - c_s) : H_i(z - c_s), discrete, shape (T, n)."""
    nodes, s, _, _ = _b_pairs(mesh)
    c = mesh.overlaps.center
    z = mesh.x[nodes] - c[s]
    n = mesh.n
    T = len(mesh.cover)
    out = np.zeros((T, n))
    for i in range(n):
        H = h_matrix(i, z)
        out[:, i] = np.bincount(s, weights=mesh.w[nodes] * frob(H, H), minlength=T)
    return out


def theta_values(mesh: QuadMesh) -> np.ndarray:
    """theta_{s,i} at the B nodes, shape (n, nb, n, n)."""
    nodes, s, _, _ = _b_pairs(mesh)
    den = theta_denominators(mesh)
    z = mesh.x[nodes] - mesh.overlaps.center[s]
    return np.array([h_matrix(i, z) / den[s, i][:, None, None] for i in range(mesh.n)])


def decompose_stage_two(mesh: QuadMesh, g0: np.ndarray, origin) -> StageResult:
    """H generators: h_s = sum_i (int H_i(y) : sum_{k>=s} g0_k) theta_{s,i}."""
    n = mesh.n
    H = np.array([h_matrix(i, mesh.x - origin) for i in range(n)])
    p = family_pairings(mesh, g0, H)
    S = mesh.tree.subtree_sum(p)
    nodes, s, own, par = _b_pairs(mesh)
    th = theta_values(mesh)
    hb = np.einsum("bi,ibjk->bjk", S[s], th)
    return StageResult(g=_transfer(mesh, g0, hb), h=hb, coeff=S, subtree=S)


def theta_duality(mesh: QuadMesh, origin) -> dict:
    """max deviations of int theta_{s,i} : H_j(. - origin) from delta_ij and of
    int theta_{s,i} : A_j from 0 over all constructed B_s."""
    nodes, s, _, _ = _b_pairs(mesh)
    th = theta_values(mesh)
    n = mesh.n
    T = len(mesh.cover)
    w = mesh.w[nodes]
    H = np.array([h_matrix(j, mesh.x[nodes] - origin) for j in range(n)])
    A = constant_generators(n)
    dev_h = 0.0
    dev_a = 0.0
    for i in range(n):
        for j in range(n):
            v = np.bincount(s, weights=w * frob(th[i], H[j]), minlength=T)
            v = v[np.unique(s)]
            dev_h = max(dev_h, float(np.abs(v - (i == j)).max()))
        for Aj in A:
            v = np.bincount(s, weights=w * frob(th[i], Aj), minlength=T)[np.unique(s)]
            # scale: |theta| ~ 1/(l |B|), int |theta| ~ 1/l
            l = mesh.overlaps.side[np.unique(s)]
            dev_a = max(dev_a, float(np.abs(v * l).max()))
    return {"theta_H_delta": dev_h, "theta_A_zero": dev_a}


# ---------------------------------------------------------------------------
# Hardy operator
# ---------------------------------------------------------------------------
def hardy_apply(mesh: QuadMesh, g, weights=None):
    """T g(x) = sum_{t != root} chi_{B_t}(x) |W_t|^{-1} int_{W_t} |g|.

    ``g`` is a nodal array (N,) or (N, k); with ``weights`` given as
    Fractions the computation is exact.  Returns (Tg at nodes, averages per t).
    """
    w = mesh.w if weights is None else weights
    g = np.asarray(g)
    ag = np.abs(g) if g.dtype != object else np.array([abs(v) for v in g.flat], dtype=object).reshape(g.shape)
    wg = ag * (w if g.ndim == 1 else w[:, None])
    num = mesh.shadow_integral(wg)
    vol = mesh.shadow_integral(np.asarray(w)) if weights is not None else mesh.shadow_volume()
    avg = num / (vol if g.ndim == 1 else vol[:, None])
    root = mesh.tree.root
    avg[root] = 0
    nb = mesh.node_b
    out = np.zeros(g.shape, dtype=avg.dtype)
    sel = nb >= 0
    out[sel] = avg[nb[sel]]
    return out, avg


def hardy_adjoint(mesh: QuadMesh, z) -> np.ndarray:
    """Adjoint of T (for the plain sum over nodes) applied to nodal z >= 0."""
    nb = mesh.node_b
    sel = nb >= 0
    T = len(mesh.cover)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        d = np.bincount(nb[sel], weights=z[sel], minlength=T)
    else:
        d = np.zeros((T, z.shape[1]))
        np.add.at(d, nb[sel], z[sel])
    vol = mesh.shadow_volume()
    d = d / (vol if z.ndim == 1 else vol[:, None])
    d[mesh.tree.root] = 0
    out = mesh.shadow_adjoint(d)
    return out * (mesh.w if z.ndim == 1 else mesh.w[:, None])


@dataclass
class HardyReport:
    q: float
    beta: float
    lower_bound: float
    power_bound: float
    structured_bound: float
    random_max: float
    random_finite: bool
    trials: int
    history: list = field(default_factory=list)


def _lq_cols(mesh, G, q, beta):
    m = mesh.w * (mesh.rho() ** (-q * beta) if beta else 1.0)
    return (m[:, None] * np.abs(G) ** q).sum(0) ** (1 / q)


def _ratios(mesh, G, q, beta):
    TG, _ = hardy_apply(mesh, G)
    num = _lq_cols(mesh, TG, q, beta)
    den = _lq_cols(mesh, G, q, beta)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def structured_candidates(mesh: QuadMesh, limit: int = 256, chunk: int = 32):
    """Indicators of extended leaf cubes, shadows and Whitney cubes, yielded
    as column blocks of width ``chunk``."""
    tr = mesh.tree
    T = len(tr)
    indptr, _ = tr.children_csr()
    leaves = np.flatnonzero(np.diff(indptr) == 0)
    pick = lambda a: a[np.linspace(0, len(a) - 1, min(limit, len(a))).astype(int)] if len(a) else a
    cols = []
    for t in pick(leaves):
        v = np.zeros(len(mesh))
        v[mesh.nodes_of(t)] = 1.0
        cols.append(v)
        if len(cols) >= chunk:
            yield np.array(cols).T
            cols = []
    byk = np.argsort(-mesh.tree.subtree_sum(np.ones(T)))
    for t in pick(np.sort(byk[: limit])):
        inside = tr.is_descendant(mesh.pair_t, t)
        v = np.zeros(len(mesh))
        v[mesh.pair_node[inside]] = 1.0
        cols.append(v)
        if len(cols) >= chunk:
            yield np.array(cols).T
            cols = []
    for t in pick(np.arange(T)):
        cols.append((mesh.node_q == t).astype(float))
        if len(cols) >= chunk:
            yield np.array(cols).T
            cols = []
    if cols:
        yield np.array(cols).T


def hardy_norm_estimate(mesh: QuadMesh, q: float, beta: float, trials: int = 1000,
                        rng: np.random.Generator | None = None, iters: int = 60,
                        batch: int = 25) -> HardyReport:
    """Lower bounds for ||T|| on L^q(rho^-beta): a nonnegative power-type
    iteration, structured indicator inputs and random nonnegative inputs."""
    rng = np.random.default_rng(0) if rng is None else rng
    if mesh.tree.root is not None and len(mesh.tree) == 1:
        return HardyReport(q, beta, 0.0, 0.0, 0.0, 0.0, True, trials)
    m = mesh.w * (mesh.rho() ** (-q * beta) if beta else 1.0)
    # power iteration on the cone
    g = np.ones(len(mesh))
    best_p = 0.0
    hist = []
    for _ in range(iters):
        g = g / (np.dot(m, g ** q) ** (1 / q))
        Tg, _ = hardy_apply(mesh, g)
        r = float(np.dot(m, Tg ** q) ** (1 / q))
        hist.append(r)
        best_p = max(best_p, r)
        z = m * Tg ** (q - 1)
        u = hardy_adjoint(mesh, z)
        g_new = (np.maximum(u, 0.0) / m) ** (1.0 / (q - 1))
        if not np.any(g_new > 0):
            break
        if np.max(np.abs(g_new / np.dot(m, g_new ** q) ** (1 / q) - g)) < 1e-12:
            g = g_new
            break
        g = g_new
    best_s = 0.0
    for cols in structured_candidates(mesh):
        best_s = max(best_s, float(_ratios(mesh, cols, q, beta).max()))
    rmax = 0.0
    finite = True
    done = 0
    cubes = mesh.node_q.copy()
    cubes[cubes < 0] = mesh.cell_owner[mesh.node_cell[cubes < 0]]
    while done < trials:
        k = min(batch, trials - done)
        # random nonnegative piecewise constants modulated per node
        per_cube = rng.exponential(size=(len(mesh.cover), k)) * (rng.random((len(mesh.cover), k)) < 0.3)
        G = per_cube[cubes] * rng.random((len(mesh), k))
        G[:, G.sum(0) == 0] += 1.0
        r = _ratios(mesh, G, q, beta)
        finite &= bool(np.all(np.isfinite(r)))
        rmax = max(rmax, float(r.max()))
        done += k
    lb = max(best_p, best_s, rmax)
    return HardyReport(q=q, beta=beta, lower_bound=lb, power_bound=best_p, structured_bound=best_s,
                       random_max=rmax, random_finite=finite, trials=trials, history=hist)


def hardy_beta_sweep(mesh: QuadMesh, q: float = 2.0, betas=(0.0, 1.0, 2.0), trials: int = 200,
                     seed: int = 0) -> dict:
    """Norm lower bounds over beta and the least-squares slope of log(norm)."""
    reps = [hardy_norm_estimate(mesh, q, b, trials=trials, rng=np.random.default_rng(seed)) for b in betas]
    norms = np.array([r.lower_bound for r in reps])
    slope = float(np.polyfit(np.asarray(betas, float), np.log(norms), 1)[0])
    return {"betas": list(betas), "norms": norms.tolist(), "slope": slope, "reports": reps}


# ---------------------------------------------------------------------------
# full decomposition
# ---------------------------------------------------------------------------
def bound_constants(n: int, K: float, beta: float = 0.0) -> dict:
    Cn = 6 * n * (1 + n * n / 2)
    return {
        "h0_sup_factor": 0.5,
        "h0_l1_factor": n * n / 2,
        "theta_sup_factor": 6.0,
        "C_n": Cn,
        "P12_form": Cn * K ** (n + 1),
        "P02_form": K ** n,
        "C0_form": K ** (n + 1 + beta),
    }


@dataclass
class VDecomposition:
    mesh: QuadMesh
    g: np.ndarray               # input nodal field
    f: np.ndarray               # phi_t g per pair
    g0: np.ndarray              # stage-one family per pair
    gt: np.ndarray              # final family per pair
    stage_one: StageResult
    stage_two: StageResult
    origin: np.ndarray
    audits: dict

    def ratio(self, q: float, beta: float = 0.0) -> float:
        """R = (sum_t ||g_t||^q_{L^q(rho^-beta)})^{1/q} / ||g||_{L^q(rho^-beta)}."""
        mesh = self.mesh
        w = mesh.w[mesh.pair_node]
        rho = mesh.rho()[mesh.pair_node] if beta else None
        num = weighted_Lq_norm(self.gt, w, rho, q, beta, -1)
        den = weighted_Lq_norm(self.g, mesh.w, mesh.rho() if beta else None, q, beta, -1)
        return num / den if den > 0 else 0.0

    def component(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        sl = self.mesh.segment(t)
        return self.mesh.pair_node[sl], self.gt[sl]


def gamma_g(mesh: QuadMesh, g: np.ndarray) -> np.ndarray:
    """Boolean mask of the subtree Gamma_g: s with some k >= s whose extended
    cube meets the support of g."""
    nz = np.any(g != 0, axis=(1, 2))
    hit = np.zeros(len(mesh.cover))
    np.add.at(hit, mesh.pair_t, nz[mesh.pair_node].astype(float))
    return mesh.tree.subtree_sum(hit) > 0


def w0_residuals(mesh: QuadMesh, g: np.ndarray, origin) -> np.ndarray:
    gens = v_generators(mesh.x, origin)
    scale = max(float(np.dot(mesh.w, entrywise_norm_r(g, 1))), 1e-300) * np.abs(gens).reshape(len(gens), -1).max(1)
    return np.array([np.dot(mesh.w, frob(g, G)) for G in gens]) / scale


def v_decompose(mesh: QuadMesh, g: np.ndarray, pou: PartitionOfUnity | None = None, origin=None,
                check_tol: float = 1e-8, audit: bool = True) -> VDecomposition:
    """Partition, stage one (constants), stage two (H generators), audits."""
    if origin is None:
        origin = mesh.cover.center[mesh.tree.root]
    origin = np.asarray(origin, dtype=float)
    res = w0_residuals(mesh, g, origin)
    if np.abs(res).max() > check_tol:
        raise NotInW0Error(res)
    pou = partition_of_unity(mesh) if pou is None else pou
    f = pou.phi[:, None, None] * g[mesh.pair_node]
    s1 = decompose_stage_one(mesh, f)
    s2 = decompose_stage_two(mesh, s1.g, origin)
    dec = VDecomposition(mesh=mesh, g=g, f=f, g0=s1.g, gt=s2.g, stage_one=s1, stage_two=s2,
                         origin=origin, audits={})
    if audit:
        dec.audits = audit_decomposition(dec)
    return dec


def audit_decomposition(dec: VDecomposition) -> dict:
    mesh = dec.mesh
    n = mesh.n
    tree = mesh.tree
    g, gt = dec.g, dec.gt
    gmax = float(np.abs(g).max()) if g.size else 0.0
    out = {}
    # (1) reconstruction
    rec = family_sum(mesh, gt) - g
    out["reconstruction"] = float(np.abs(rec).max() / gmax) if gmax > 0 else float(np.abs(rec).max())
    rec0 = family_sum(mesh, dec.g0) - g
    out["reconstruction_stage_one"] = float(np.abs(rec0).max() / gmax) if gmax > 0 else float(np.abs(rec0).max())
    # (2) support: families are stored only on pairs with node in Omega_t, so
    # containment is structural; record that no value sits outside Omega_t
    olo, ohi = mesh.cover.omega_bounds()
    xt = mesh.x[mesh.pair_node]
    inside = np.all((xt > olo[mesh.pair_t]) & (xt < ohi[mesh.pair_t]), 1)
    out["support_violations"] = int(np.sum(np.any(gt[~inside] != 0, axis=(1, 2))))
    # (3) orthogonality per t, relative to ||g_t||_L1 * ||phi_j||_inf on Omega_t
    gens = v_generators(mesh.x, dec.origin)
    P = family_pairings(mesh, gt, gens)
    w = mesh.w[mesh.pair_node]
    l1 = np.bincount(mesh.pair_t, weights=w * entrywise_norm_r(gt, 1), minlength=len(tree))
    gsup = np.zeros((len(tree), len(gens)))
    absg = np.abs(gens).reshape(len(gens), len(mesh), -1).max(2)
    for j in range(len(gens)):
        np.maximum.at(gsup[:, j], mesh.pair_t, absg[j][mesh.pair_node])
    # the pairings of g_t are sums over the shadow W_t, so their rounding
    # floor scales with int_{W_t} ||g||_1 even where g_t itself is tiny
    Wg1 = mesh.shadow_integral(mesh.w * entrywise_norm_r(g, 1))
    scale = np.maximum(l1, Wg1)[:, None] * gsup
    nzs = scale > 0
    out["orthogonality"] = float((np.abs(P)[nzs] / scale[nzs]).max()) if np.any(nzs) else 0.0
    out["orthogonality_abs_zero_scale"] = float(np.abs(P)[~nzs].max()) if np.any(~nzs) else 0.0
    strict = l1[:, None] * gsup
    big = strict > 1e-6 * scale
    out["orthogonality_strict"] = float((np.abs(P)[big] / strict[big]).max()) if np.any(big) else 0.0
    A = constant_generators(n)
    P0 = family_pairings(mesh, dec.g0, A)
    l10 = np.bincount(mesh.pair_t, weights=w * entrywise_norm_r(dec.g0, 1), minlength=len(tree))
    out["stage_one_orthogonality"] = float((np.abs(P0).max(1) / np.maximum(l10, Wg1).clip(1e-300)).max())
    # localization
    gam = gamma_g(mesh, g)
    off = ~gam[mesh.pair_t]
    out["localization_nonzero"] = int(np.sum(np.any(gt[off] != 0, axis=(1, 2))))
    out["gamma_g_size"] = int(gam.sum())
    # (P11) exact
    nb = mesh.node_b[mesh.pair_node]
    par = tree.parent
    special = (nb >= 0) & ((nb == mesh.pair_t) | (par[np.maximum(nb, 0)] == mesh.pair_t))
    gt_inf = entrywise_norm_r(gt, np.inf)
    g_inf = entrywise_norm_r(g, np.inf)[mesh.pair_node]
    out["P11_violations"] = int(np.sum(gt_inf[~special] > g_inf[~special]))
    out["P11_points"] = int(np.sum(~special))
    out["P11_equal_f"] = bool(np.array_equal(gt[~special], dec.f[~special]))
    # (P12) with measured constant and the per-node rigorous form
    Tg1, avg = hardy_apply(mesh, entrywise_norm_r(g, 1))
    tg = Tg1[mesh.pair_node]
    excess = gt_inf - g_inf
    sp = np.flatnonzero(special)
    pos = tg[sp] > 0
    out["P12_measured"] = float(np.max(excess[sp][pos] / tg[sp][pos], initial=0.0))
    out["P12_zero_T_excess"] = float(np.max(excess[sp][~pos], initial=0.0))
    s_of = nb[sp]
    bound = rigorous_P12_factor(mesh)
    rhs = g_inf[sp] + bound[s_of] * tg[sp]
    out["P12_rigorous_violation"] = float(np.max((gt_inf[sp] - rhs) / np.maximum(rhs, 1e-300), initial=-1.0))
    # esths: h0 bounds against int_{W_s} ||g||_1
    nodes, s, _, _ = _b_pairs(mesh)
    Wg = Wg1
    bvol = mesh.b_volume()
    h0 = dec.stage_one.h
    den = Wg[s] / bvol[s]
    ok = den > 0
    out["h0_sup_ratio"] = float(np.max(entrywise_norm_r(h0, np.inf)[ok] / den[ok], initial=0.0))
    out["h0_l1_ratio"] = float(np.max(entrywise_norm_r(h0, 1)[ok] / den[ok], initial=0.0))
    # telescoping: sum_{k >= s} g0_k = sum_{k >= s} f_k - h0_s, through pairings
    # with all generators (the identity holds pointwise; pairings witness it)
    out["telescoping"] = telescoping_residual(dec)
    K = float(shadow_K(mesh))
    out["bound_constants"] = bound_constants(n, K)
    out["K"] = K
    return out


def shadow_K(mesh: QuadMesh) -> float:
    from .tree import shadow_constant
    if "K" not in mesh._cache:
        mesh._cache["K"] = shadow_constant(mesh.tree).K
    return mesh._cache["K"]


def rigorous_P12_factor(mesh: QuadMesh) -> np.ndarray:
    """Per-node factor F_s with ||g_t||_inf <= ||g||_inf + F_s T||g||_1 on B_s,
    from the sharper intermediate estimates of the two stages:
    |W_s|/(2|B_s|) + 6n(1 + n^2/2) diam_inf(W_s)/l_s * |W_s|/|B_s|,
    where diam_inf is the largest sup-norm distance from c_s to W_s."""
    from .tree import subtree_bbox
    n = mesh.n
    tr = mesh.tree
    olo, ohi = mesh.cover.omega_bounds()
    lo = olo.copy()
    hi = ohi.copy()
    for nodes in reversed(tr.by_depth()[1:]):
        np.minimum.at(lo, tr.parent[nodes], lo[nodes])
        np.maximum.at(hi, tr.parent[nodes], hi[nodes])
    c = mesh.overlaps.center
    reach = np.maximum(np.abs(hi - c), np.abs(c - lo)).max(1)
    W = mesh.shadow_volume()
    B = mesh.b_volume()
    l = mesh.overlaps.side
    with np.errstate(divide="ignore", invalid="ignore"):
        F = W / (2 * B) + 6 * n * (1 + n * n / 2) * reach / l * W / B
    F[tr.root] = 0.0
    return F


def telescoping_residual(dec: VDecomposition) -> float:
    """max over s of |sum_{k>=s} g0_k - (sum_{k>=s} f_k - h0_s)| measured by
    all constant and H pairings, relative to the pairing magnitudes."""
    mesh = dec.mesh
    n = mesh.n
    gens = list(constant_generators(n)) + [h_matrix(i, mesh.x - dec.origin) for i in range(n)]
    Pg = mesh.tree.subtree_sum(family_pairings(mesh, dec.g0, gens))
    Pf = mesh.tree.subtree_sum(family_pairings(mesh, dec.f, gens))
    nodes, s, _, _ = _b_pairs(mesh)
    T = len(mesh.cover)
    Ph = np.zeros((T, len(gens)))
    wn = mesh.w[nodes]
    for j, G in enumerate(gens):
        gv = G if G.ndim == 2 else G[nodes]
        Ph[:, j] = np.bincount(s, weights=wn * frob(dec.stage_one.h, gv), minlength=T)
    r = Pg - (Pf - Ph)
    scale = np.abs(Pf).max() + np.abs(Ph).max()
    return float(np.abs(r).max() / scale) if scale > 0 else float(np.abs(r).max())


def random_w0_field(mesh: QuadMesh, rng: np.random.Generator, degree: int = 1, cubes=None,
                    origin=None) -> np.ndarray:
    """Random polynomial matrix field supported on a set of Whitney cubes and
    projected off V there (so it lies in W_0)."""
    from .conformal import project_out_v
    from .fields import Poly, eval_poly_array
    n = mesh.n
    cov = mesh.cover
    if cubes is None:
        k = max(1, len(cov) // 4)
        start = int(rng.integers(len(cov)))
        d = np.linalg.norm(cov.center - cov.center[start], axis=1)
        cubes = np.argsort(d)[:k]
    P = np.empty((n, n), dtype=object)
    L = cov.grid.scale
    for idx in np.ndindex(n, n):
        P[idx] = Poly.random(n, degree, rng)
    x0 = cov.center[cubes].mean(0)
    vals = eval_poly_array(P, (mesh.x - x0) / L)
    keep = np.isin(mesh.node_q, cubes)
    vals[~keep] = 0.0
    return project_out_v(vals, mesh, nodes=np.flatnonzero(keep), origin=origin)
