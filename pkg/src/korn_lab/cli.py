"""korn-lab command line: whitney, tree, decompose, hardy, korn, cusp, all.

Each command writes report.json (shared checks[] schema), data/*.csv,
summary.txt and figures/*.png into --out; wall-clock data go only to
run_meta.json.  Exit status: 0 all checks pass, 1 audit failure, 2 error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import geometry, whitney
from .reporting import Report, check

DEFAULTS = {
    "whitney": ("l_shape", None),
    "tree": ("l_shape", 6),
    "decompose": ("l_shape3", 4),
    "hardy": ("l_shape", 6),
    "korn": ("unit_cube", None),
    "duality": ("l_shape3", 4),
}


class CommandError(RuntimeError):
    def __init__(self, module: str, exc: BaseException):
        super().__init__(f"[{module}] {type(exc).__name__}: {exc}")
        self.module = module


def named_domains() -> dict:
    d = dict(geometry.catalog())
    d["l_shape3"] = geometry.l_shape(3, 1.0)
    d["lshape"] = d["l_shape"]
    d["cube"] = d["unit_cube"]
    d["square"] = d["unit_square"]
    d["cusp"] = d["cusp_gamma2"]
    d["koch"] = d["koch_level3"]
    return d


def resolve_domain(arg: str):
    p = Path(arg)
    if p.suffix == ".json" or p.exists():
        if not p.exists():
            raise geometry.DomainSpecError(f"domain file {arg} not found", "$")
        return geometry.parse_domain_spec(p.read_text())
    doms = named_domains()
    if arg not in doms:
        raise geometry.DomainSpecError(f"unknown domain {arg!r}; known: {sorted(doms)}", "$")
    return doms[arg]


def _floats(text) -> list:
    if text is None:
        return []
    if isinstance(text, (int, float)):
        return [float(text)]
    out = []
    for tok in str(text).split(","):
        tok = tok.strip()
        if "/" in tok:
            a, b = tok.split("/")
            out.append(float(a) / float(b))
        elif tok:
            out.append(float(tok))
    return out


def _level(args, domain_name, dom):
    if args.max_level is not None:
        return int(args.max_level)
    lv = geometry.catalog_levels().get(domain_name)
    if lv is not None:
        return lv
    return 8 if dom.n == 2 else 6


def _run(module: str, fn, *a, **k):
    try:
        return fn(*a, **k)
    except Exception as exc:                      # noqa: BLE001 - tagged and re-raised
        raise CommandError(module, exc) from exc


def _plots(args) -> bool:
    return not args.no_plots


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_whitney(args, out: Path) -> Report:
    name = args.domain or DEFAULTS["whitney"][0]
    dom = _run("geometry", resolve_domain, name)
    level = _level(args, name, dom)
    rep = Report("whitney", {"domain": name, "max_level": level, "seed": args.seed})
    t0 = time.perf_counter()
    cov = _run("whitney", whitney.whitney_decompose, dom, level)
    rep.tic("cover", time.perf_counter() - t0)
    rng = np.random.default_rng(args.seed)
    rep.add(*_run("whitney", whitney.audit_cover, cov, dom, rng))
    rep.results = {"cubes": len(cov), "edges": int(len(cov.edges)),
                   "levels": {int(k): int(v) for k, v in zip(*np.unique(cov.levels, return_counts=True))}}
    out.mkdir(parents=True, exist_ok=True)
    (out / "data").mkdir(exist_ok=True)
    (out / "data" / "cover.jsonl").write_text(cov.to_jsonl())
    rep.table("cubes", ["level", "lo", "side"] + [f"c{i}" for i in range(dom.n)],
              [[int(l), ";".join(repr(float(v)) for v in lo), float(s)] + [float(c) for c in ce]
               for l, lo, s, ce in zip(cov.levels, cov.lo, cov.side, cov.center)])
    if _plots(args):
        from .plotting import plot_cover
        plot_cover(cov, out / "figures" / "cover.png")
    return rep


def _tree_for(dom, level):
    from .tree import build_overlap_cubes, build_tree
    cov = _run("whitney", whitney.whitney_decompose, dom, level)
    tree = _run("tree", build_tree, cov)
    ov = _run("tree", build_overlap_cubes, tree)
    return cov, tree, ov


def cmd_tree(args, out: Path) -> Report:
    from .tree import shadow_constant
    name = args.domain or DEFAULTS["tree"][0]
    dom = _run("geometry", resolve_domain, name)
    level = int(args.max_level) if args.max_level is not None else DEFAULTS["tree"][1]
    rep = Report("tree", {"domain": name, "max_level": level})
    cov, tree, ov = _tree_for(dom, level)
    sc = shadow_constant(tree)
    spans = int(np.sum(tree.parent >= 0)) == len(cov) - 1
    rep.add(check("tree_spans_cover", spans, len(cov) - 1 if spans else -1, len(cov) - 1),
            check("overlap_cubes_disjoint", ov.check_disjoint(), 0 if ov.check_disjoint() else 1, 0),
            check("overlap_cubes_inside_extended", ov.check_inside_omegas(),
                  0 if ov.check_inside_omegas() else 1, 0),
            check("shadow_constant_finite", np.isfinite(sc.K), sc.K, "finite"))
    rep.results = {"cubes": len(cov), "K": sc.K, "argmax_t": sc.argmax_t, "argmax_s": sc.argmax_s,
                   "depth": int(tree.depth.max()), "root": int(tree.root),
                   "max_halvings": int(ov.halvings.max(initial=0))}
    out.mkdir(parents=True, exist_ok=True)
    (out / "data").mkdir(exist_ok=True)
    (out / "data" / "tree.csv").write_text(tree.to_csv())
    nodes = ov.nodes
    rep.table("overlap_cubes", ["t"] + [f"lo{i}" for i in range(dom.n)] + ["side"],
              [[int(t)] + [float(v) for v in ov.lo[t]] + [float(ov.side[t])] for t in nodes])
    rep.table("shadow", ["t", "depth", "side", "K_t"],
              [[i, int(tree.depth[i]), float(cov.side[i]), float(sc.per_node[i])] for i in range(len(cov))])
    if _plots(args):
        from .plotting import plot_shadow
        plot_shadow(cov.side, tree.depth, sc.per_node, out / "figures" / "shadow.png")
    return rep


def _mesh_for(dom, level):
    from .fields import build_quadrature
    cov, tree, ov = _tree_for(dom, level)
    return _run("fields", build_quadrature, tree, ov)


def decomposition_checks(dec, qs, betas, tag: str = "") -> list:
    a = dec.audits
    out = [
        check(f"{tag}reconstruction", a["reconstruction"] <= 1e-10, a["reconstruction"], 1e-10),
        check(f"{tag}support_containment", a["support_violations"] == 0, a["support_violations"], 0),
        check(f"{tag}orthogonality", a["orthogonality"] <= 1e-9, a["orthogonality"], 1e-9),
        check(f"{tag}P11", a["P11_violations"] == 0, a["P11_violations"], 0),
        check(f"{tag}localization", a["localization_nonzero"] == 0, a["localization_nonzero"], 0),
        check(f"{tag}P12_rigorous", a["P12_rigorous_violation"] <= 1e-9, a["P12_rigorous_violation"], 1e-9),
    ]
    for q in qs:
        for b in betas:
            r = dec.ratio(q, b)
            out.append(check(f"{tag}ratio_finite_q{q:g}_beta{b:g}", np.isfinite(r) and r > 0, r, "finite"))
    return out


def cmd_decompose(args, out: Path) -> Report:
    from .decompose import partition_of_unity, random_w0_field, v_decompose
    name = args.domain or DEFAULTS["decompose"][0]
    dom = _run("geometry", resolve_domain, name)
    level = int(args.max_level) if args.max_level is not None else DEFAULTS["decompose"][1]
    qs = _floats(args.q) or [1.5, 2.0, 3.0]
    betas = _floats(args.beta) or [0.0, 1.0]
    rep = Report("decompose", {"domain": name, "max_level": level, "q": qs, "beta": betas,
                               "seed": args.seed, "fields": args.fields, "field": args.field})
    mesh = _mesh_for(dom, level)
    pou = _run("decompose", partition_of_unity, mesh)
    rng = np.random.default_rng(args.seed)
    if args.field:
        g_list = [np.load(args.field)]
        if g_list[0].shape != (len(mesh), dom.n, dom.n):
            raise CommandError("decompose", ValueError(
                f"field shape {g_list[0].shape} does not match mesh nodes ({len(mesh)}, {dom.n}, {dom.n})"))
    else:
        g_list = [random_w0_field(mesh, rng) for _ in range(args.fields)]
    rows = []
    ratios = []
    for i, g in enumerate(g_list):
        dec = _run("decompose", v_decompose, mesh, g, pou)
        rep.add(*decomposition_checks(dec, qs, betas, tag=f"field{i}_"))
        for q in qs:
            for b in betas:
                ratios.append([i, q, b, dec.ratio(q, b)])
        if i == 0:
            nt = np.sqrt(np.bincount(mesh.pair_t, weights=mesh.w[mesh.pair_node] * (dec.gt ** 2).sum((1, 2)),
                                     minlength=len(mesh.cover)))
            rows = [[t, int(mesh.tree.depth[t]), float(nt[t])] for t in range(len(mesh.cover))]
            rep.results["audits_field0"] = {k: v for k, v in dec.audits.items() if k != "bound_constants"}
            if _plots(args):
                from .plotting import plot_components
                plot_components(mesh.tree.depth, nt, out / "figures" / "components.png")
    rep.results.update({"cubes": len(mesh.cover), "nodes": len(mesh), "pairs": int(len(mesh.pair_t))})
    rep.table("ratios", ["field", "q", "beta", "R"], ratios)
    rep.table("components", ["t", "depth", "norm_L2"], rows)
    return rep


def cmd_hardy(args, out: Path) -> Report:
    from .decompose import hardy_beta_sweep, shadow_K
    name = args.domain or DEFAULTS["hardy"][0]
    dom = _run("geometry", resolve_domain, name)
    level = int(args.max_level) if args.max_level is not None else DEFAULTS["hardy"][1]
    qs = _floats(args.q) or [2.0]
    betas = _floats(args.beta) or [0.0, 1.0, 2.0]
    rep = Report("hardy", {"domain": name, "max_level": level, "q": qs, "beta": betas,
                           "seed": args.seed, "trials": args.trials})
    mesh = _mesh_for(dom, level)
    K = shadow_K(mesh)
    rows = []
    for q in qs:
        sw = _run("decompose", hardy_beta_sweep, mesh, q, betas, args.trials, args.seed)
        finite = all(r.random_finite and np.isfinite(r.lower_bound) for r in sw["reports"])
        rep.add(check(f"norm_finite_q{q:g}", finite, max(sw["norms"]), "finite"))
        if len(betas) > 1:
            rep.add(check(f"beta_slope_q{q:g}", sw["slope"] <= 1.15 * np.log(K), sw["slope"], 1.15 * np.log(K)))
        for b, r in zip(betas, sw["reports"]):
            rows.append([q, b, r.lower_bound, r.power_bound, r.structured_bound, r.random_max])
        if _plots(args) and q == qs[0]:
            from .plotting import plot_hardy
            plot_hardy(betas, sw["norms"], out / "figures" / "hardy.png")
    rep.results = {"K": K, "log_K": float(np.log(K))}
    rep.table("hardy", ["q", "beta", "lower_bound", "power", "structured", "random"], rows)
    return rep


def cmd_korn(args, out: Path) -> Report:
    from .korn import korn_constant
    name = args.domain or DEFAULTS["korn"][0]
    dom = _run("geometry", resolve_domain, name)
    betas = _floats(args.beta) or [0.0]
    ms = _floats(args.mesh) or [4.0, 8.0]
    hs = [m if m < 1 else dom.extent / m for m in ms]
    rep = Report("korn", {"domain": name, "beta": betas, "mesh": hs})
    rows = []
    for b in betas:
        Cs = []
        for h in hs:
            r = _run("korn", korn_constant, dom, h, b)
            rep.tic(f"korn_beta{b:g}_h{h:g}", r.seconds)
            rep.add(check(f"residual_beta{b:g}_h{h:g}", r.residual <= 1e-8, r.residual, 1e-8))
            rows.append([b, h, r.N, r.C, r.mu, r.residual, r.deflation_dim, r.ndof])
            Cs.append(r.C)
        if len(Cs) >= 2:
            gap = abs(Cs[-2] - Cs[-1]) / Cs[-1]
            rep.add(check(f"cauchy_beta{b:g}", gap < 0.05, gap, 0.05, h_pair=hs[-2:]))
        if _plots(args) and b == betas[0]:
            from .plotting import plot_korn
            plot_korn(hs, Cs, out / "figures" / "korn.png")
    rep.table("korn", ["beta", "h", "N", "C", "mu", "residual", "deflation_dim", "ndof"], rows)
    rep.results = {"C": {f"{r[0]:g}/{r[1]:g}": r[3] for r in rows}}
    return rep


def cmd_cusp(args, out: Path) -> Report:
    from .cusp import CuspParams, admissible_window, cusp_slope, cusp_truncated_norms
    eps = _floats(args.eps) or [1e-2, 1e-3, 1e-4]
    par = _run("cusp", CuspParams, args.gamma, args.s, tuple(eps))
    rep = Report("cusp", {"gamma": args.gamma, "s": args.s, "eps": eps})
    rows = []
    for e in sorted(eps, reverse=True):
        r = _run("cusp", cusp_truncated_norms, args.gamma, args.s, e)
        rows.append([e, r.lhs, r.rhs, r.grad2, r.l2, r.v2_Q, r.lhs_quad, r.rhs_quad])
    rep.add(check("admissible_exponent", par.admissible, args.s, list(admissible_window(args.gamma))))
    ex = par.exponents
    rep.results = {"exponents": ex}
    small = [e for e in eps if e <= 1e-3]
    if small:
        from .cusp import halving_growth
        gr = min(halving_growth(args.gamma, args.s, e) for e in small)
        rep.add(check("lhs_halving_growth", gr >= 1.8, gr, 1.8))
    if len(eps) >= 2:
        sl = cusp_slope(args.gamma, args.s, eps)
        pred = sl["predicted"]
        err = abs(sl["slope"] - pred) / abs(pred) if pred else abs(sl["slope"])
        rep.add(check("lhs_loglog_slope", err <= 0.03, sl["slope"], pred, relative_error=err))
    # convergence of the right-hand side between the two fixed levels 1e-3 and 1e-4
    r_hi = cusp_truncated_norms(args.gamma, args.s, 1e-3).l2
    r_lo = cusp_truncated_norms(args.gamma, args.s, 1e-4).l2
    chg = abs(r_lo - r_hi) / r_lo if r_lo else abs(r_lo - r_hi)
    rep.add(check("rhs_convergence", chg < 0.02, chg, 0.02))
    quad = max(abs(r[6] / r[1] - 1) for r in rows)
    rep.add(check("graded_quadrature_agreement", quad <= 1e-10, quad, 1e-10))
    rep.table("cusp", ["eps", "lhs", "rhs", "grad2", "l2", "v2_Q", "lhs_quad", "rhs_quad"], rows)
    if _plots(args):
        from .plotting import plot_cusp
        a = np.array(rows)
        plot_cusp(a[:, 0], a[:, 1], a[:, 2], out / "figures" / "cusp.png")
    return rep


def cmd_duality(args, out: Path) -> Report:
    from .decompose import partition_of_unity
    from .duality import verify_duality_chain
    name = args.domain or DEFAULTS["duality"][0]
    dom = _run("geometry", resolve_domain, name)
    level = int(args.max_level) if args.max_level is not None else DEFAULTS["duality"][1]
    betas = _floats(args.beta) or [0.0, 1.0]
    rep = Report("duality", {"domain": name, "max_level": level, "beta": betas, "seed": args.seed,
                             "pairs": args.fields})
    mesh = _mesh_for(dom, level)
    pou = partition_of_unity(mesh)
    rng = np.random.default_rng(args.seed)
    rows = []
    for b in betas:
        for i in range(args.fields):
            ch = _run("korn", verify_duality_chain, mesh, b, rng, pou)
            rep.add(check(f"chain_beta{b:g}_pair{i}", ch.ok, len(ch.violations), 0,
                          violations=ch.violations))
            rows.append([b, i] + list(ch.values))
    rep.table("chain", ["beta", "pair"] + [f"L{k}" for k in range(11)], rows)
    return rep


def cmd_kernel(args, out: Path) -> Report:
    from .conformal import SigmaElement, anchor_residual, kernel_dimensions, trace_free_strain
    rep = Report("kernel", {"seed": args.seed})
    rng = np.random.default_rng(args.seed)
    for n in (3, 4):
        bad = 0
        for _ in range(100):
            w = SigmaElement.random(n, rng)
            L = trace_free_strain(w.as_poly())
            bad += int(not all(p.is_zero() for p in L.flat))
        dims = kernel_dimensions(n)
        rep.add(check(f"l_of_sigma_zero_n{n}", bad == 0, bad, 0),
                check(f"rank_sigma_n{n}", dims["sigma_rank"] == dims["sigma_dim"], dims["sigma_rank"],
                      dims["sigma_dim"]),
                check(f"rank_V_n{n}", dims["v_rank"] == dims["v_dim"], dims["v_rank"], dims["v_dim"]))
        res = max(anchor_residual(SigmaElement.random(n, rng, integer=False).d_sigma(), rng.standard_normal(n), rng)
                  for _ in range(20))
        rep.add(check(f"anchor_independence_n{n}", res <= 1e-10, res, 1e-10))
    return rep


COMMANDS = {
    "whitney": cmd_whitney, "tree": cmd_tree, "decompose": cmd_decompose, "hardy": cmd_hardy,
    "korn": cmd_korn, "cusp": cmd_cusp, "duality": cmd_duality, "kernel": cmd_kernel,
}


def cmd_all(args, out: Path) -> Report:
    """Every command with its acceptance-scale defaults, one subdirectory each."""
    rep = Report("all", {"seed": args.seed})
    plan = [("kernel", {})]
    for name, lv in geometry.catalog_levels().items():
        plan.append(("whitney", {"domain": name, "max_level": lv}))
    for name in ("l_shape", "cusp_gamma2"):
        for lv in (6, 8):
            plan.append(("tree", {"domain": name, "max_level": lv}))
    plan += [("decompose", {"fields": 20}), ("hardy", {}), ("duality", {"fields": 20}), ("cusp", {"eps": "1e-3,5e-4,2.5e-4,1.25e-4,1e-4"}),
             ("korn", {"mesh": args.mesh or "16,32", "beta": "0"})]
    Ks = {}
    for cmd, over in plan:
        sub = argparse.Namespace(**{**vars(args), "domain": None, "max_level": None, "q": None, "beta": None,
                                    "mesh": None, "eps": None, **over})
        tag = cmd + ("_" + over["domain"] + f"_{over['max_level']}" if "domain" in over else "")
        r = COMMANDS[cmd](sub, out / tag)
        r.write(out / tag)
        for c in r.checks:
            rep.add({**c, "name": f"{tag}/{c['name']}"})
        rep.timings.update({f"{tag}/{k}": v for k, v in r.timings.items()})
        if cmd == "tree":
            Ks[(over["domain"], over["max_level"])] = r.results["K"]
    if Ks:
        a, b = Ks[("l_shape", 6)], Ks[("l_shape", 8)]
        rep.add(check("tree/K_lshape_stable", abs(b - a) / a < 0.10, abs(b - a) / a, 0.10))
        a, b = Ks[("cusp_gamma2", 6)], Ks[("cusp_gamma2", 8)]
        rep.add(check("tree/K_cusp_growth", (b - a) / a >= 0.25, (b - a) / a, 0.25))
        rep.results["K"] = {f"{k[0]}@{k[1]}": v for k, v in Ks.items()}
    return rep


COMMANDS["all"] = cmd_all


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="korn-lab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--domain", help="catalog name or path to a JSON domain description")
    p.add_argument("--max-level", type=int, dest="max_level")
    p.add_argument("--q", help="comma-separated exponents")
    p.add_argument("--beta", help="comma-separated weight exponents")
    p.add_argument("--mesh", help="comma-separated mesh sizes h (<1) or elements per side (>=1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="korn_lab_out")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--s", type=float, default=-2.0)
    p.add_argument("--eps", help="comma-separated truncation levels")
    p.add_argument("--fields", type=int, default=3, help="random fields or (u, S) pairs")
    p.add_argument("--field", help=".npy nodal matrix field for decompose")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--no-plots", action="store_true", dest="no_plots", help="skip PNG figures")
    return p


def _thread_limit():
    n = os.environ.get("KORN_LAB_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(int(n))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    limiter = _thread_limit()
    try:
        rep = COMMANDS[args.command](args, out)
    except CommandError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except geometry.DomainSpecError as exc:
        print(f"[geometry] {exc}", file=sys.stderr)
        return 2
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    rep.write(out)
    sys.stdout.write(rep.summary())
    if not rep.ok:
        print("audit failure: " + ", ".join(rep.failed), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
