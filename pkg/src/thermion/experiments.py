"""Experiment pipelines: one function per CLI subcommand.

Each pipeline is deterministic given (config, seed): random instances use
a counter-based generator keyed by (seed, instance index) so neither
scheduling nor the worker count can change any result, and sweep results
are reduced in index order.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import commutators as comm
from . import dynamics as dyn
from . import feshbach as fesh
from . import fgr
from . import flows
from . import virial
from .operators import assemble_conjugates, assemble_liouvillian, check_j
from .params import ModelParams
from .reports import BoundReport, Report


@dataclass
class ExperimentConfig:
    kind: str
    params: ModelParams = field(default_factory=ModelParams)
    seed: int = 0
    jobs: int = 1
    out_dir: str = "results"
    fmt: str = "json"
    options: dict = field(default_factory=dict)

    def opt(self, key, default):
        return self.options.get(key, default)


def _instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.Philox(key=[seed, index]))


def _pmap(fn, items, jobs: int):
    """Order-preserving parallel map (results reduced by index)."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _config_echo(cfg: ExperimentConfig) -> dict:
    echo = asdict(cfg.params)
    echo["form_factor"] = {
        "kind": "power_exp", "power": cfg.params.form_factor.g.power,
        "scale": cfg.params.form_factor.g.scale}
    echo["kernel"] = {
        "kind": "rank_one_power_exp",
        "power": cfg.params.kernel.gamma.power,
        "scale": cfg.params.kernel.gamma.scale,
        "g_ee": cfg.params.kernel.g_ee}
    # worker count and output paths are execution details, not experiment
    # inputs: reports must be byte-identical across --jobs settings
    return {"kind": cfg.kind, "seed": cfg.seed, "model": echo,
            "options": cfg.options}


# ---------------------------------------------------------------------------

def run_fgr(cfg: ExperimentConfig) -> Report:
    p = cfg.params
    eps_list = tuple(cfg.opt("eps_list", (0.2, 0.1, 0.05, 0.025)))
    checks = []

    res = fgr.golden_rule(p, eps_list)
    checks.append(BoundReport(
        check="golden-rule constant strictly positive",
        value=res.gamma_limit, bound=0.0, slack=res.gamma_limit,
        passed=bool(res.gamma_limit > 0.0),
        detail={"gamma_eps": {str(k): v for k, v in res.gamma_eps.items()},
                "cutoffs": res.cutoffs}))

    adaptive = fgr.gamma_regularized(p, eps_list[0], method="adaptive")
    midpoint = fgr.gamma_regularized(p, eps_list[0], method="midpoint")
    rel = abs(adaptive - midpoint) / abs(adaptive)
    checks.append(BoundReport(
        check="independent quadratures agree",
        value=rel, bound=1e-6, slack=1e-6 - rel, passed=bool(rel <= 1e-6),
        detail={"adaptive": adaptive, "midpoint": midpoint,
                "eps": eps_list[0]}))

    checks.append(fgr.eps_convergence(p, eps_list))
    checks.extend(fgr.check_hypotheses(p))

    if cfg.opt("operator_check", False):
        checks.append(fgr.operator_vs_quadrature(
            p, float(cfg.opt("operator_eps", 0.5))))

    tables = {"gamma_vs_eps": {
        "columns": ["eps", "gamma_eps", "gamma_limit"],
        "rows": [[e, res.gamma_eps[e], res.gamma_limit] for e in eps_list]}}
    return Report(kind="fgr", config=_config_echo(cfg), checks=checks,
                  tables=tables, stats={"gamma_limit": res.gamma_limit})


# ---------------------------------------------------------------------------

def run_bound_chain(cfg: ExperimentConfig) -> Report:
    p = cfg.params
    rep = fesh.verify_bound_chain(
        p,
        theta=cfg.opt("theta", None),
        epsilon=cfg.opt("epsilon", None),
        lam=cfg.opt("lam", None),
        gamma=cfg.opt("gamma", None))
    stats = {"gamma": rep.gamma, "k49": rep.k49,
             "recipe": asdict(rep.recipe), "measured": rep.measured,
             "run_params": rep.params}
    return Report(kind="bound-chain", config=_config_echo(cfg),
                  checks=list(rep.steps), stats=stats)


# ---------------------------------------------------------------------------

def _fuzz_instance(args):
    seed, idx, dim_max = args
    rng = _instance_rng(seed, idx)
    dim = int(rng.integers(6, dim_max + 1))
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    mat = (a + a.conj().T) / 2.0
    rank = 1 + idx % 2
    q = np.linalg.qr(rng.standard_normal((dim, rank))
                     + 1j * rng.standard_normal((dim, rank)))[0]
    defects, tested, _ = fesh.isospectrality_defect(mat, q)
    worst = float(defects.max()) if len(defects) else 0.0

    roots = fesh.find_reduction_roots(mat, q, n_grid=160)
    evals = np.linalg.eigvalsh(mat)
    root_err = 0.0
    for r in roots:
        root_err = max(root_err, float(np.min(np.abs(evals - r))))
    return worst, root_err, len(tested), len(roots)


def run_feshbach_fuzz(cfg: ExperimentConfig) -> Report:
    n = int(cfg.opt("instances", 200))
    dim_max = int(cfg.opt("dim_max", 20))
    results = _pmap(_fuzz_instance,
                    [(cfg.seed, i, dim_max) for i in range(n)], cfg.jobs)
    worst = max(r[0] for r in results)
    worst_root = max(r[1] for r in results)
    n_eigs = sum(r[2] for r in results)
    n_roots = sum(r[3] for r in results)
    checks = [
        BoundReport(
            check="eigenvalues below the complement spectrum solve the "
                  "reduced fixed-point equation",
            value=worst, bound=1e-10, slack=1e-10 - worst,
            passed=bool(worst <= 1e-10),
            detail={"instances": n, "eigenvalues_tested": n_eigs}),
        BoundReport(
            check="reduced fixed points are eigenvalues",
            value=worst_root, bound=1e-8, slack=1e-8 - worst_root,
            passed=bool(worst_root <= 1e-8),
            detail={"roots_found": n_roots}),
    ]
    return Report(kind="feshbach-fuzz", config=_config_echo(cfg),
                  checks=checks, stats={"instances": n})


# ---------------------------------------------------------------------------

def run_flow_check(cfg: ExperimentConfig) -> Report:
    prof = flows.saturating_profile()
    prof.certify()
    tol = float(cfg.opt("tol", 1e-10))
    n_pts = int(cfg.opt("n_points", 50))
    rng = _instance_rng(cfg.seed, 0)
    xs = rng.uniform(0.05, 8.0, n_pts)
    ts = np.linspace(-2.0, 2.0, 9)
    checks = []

    worst_group = 0.0
    worst_inverse = 0.0
    for x in xs[:10]:
        for s, t in ((0.5, 0.7), (-0.4, 1.1), (0.9, -0.3)):
            whole = flows.integrate_flow(prof, float(x), s + t, tol).endpoint
            part = flows.integrate_flow(
                prof, flows.integrate_flow(prof, float(x), t, tol).endpoint,
                s, tol).endpoint
            worst_group = max(worst_group, abs(whole - part))
        fwd = flows.integrate_flow(prof, float(x), 1.3, tol).endpoint
        back = flows.integrate_flow(prof, fwd, -1.3, tol).endpoint
        worst_inverse = max(worst_inverse, abs(back - x))
    checks.append(BoundReport(
        check="flow composition law", value=worst_group, bound=10 * tol,
        slack=10 * tol - worst_group, passed=bool(worst_group <= 10 * tol),
        detail={}))
    checks.append(BoundReport(
        check="flow inverse law", value=worst_inverse, bound=10 * tol,
        slack=10 * tol - worst_inverse,
        passed=bool(worst_inverse <= 10 * tol), detail={}))

    nodes = np.linspace(0.02, 12.0, 600)
    psi = np.exp(-((nodes - 2.0) / 0.5) ** 2).astype(complex)
    worst_norm = 0.0
    flagged = False
    for t in (-1.0, -0.5, 0.5, 1.0):
        res = flows.induced_unitary_apply(prof, lambda x: np.ones_like(x),
                                          t, nodes, psi, tol)
        dx = np.gradient(nodes)
        n0 = np.sqrt(np.sum(np.abs(psi) ** 2 * dx))
        n1 = np.sqrt(np.sum(np.abs(res.values) ** 2 * dx))
        worst_norm = max(worst_norm, abs(n1 / n0 - 1.0))
        flagged |= res.flagged and res.mass_loss > 0
    checks.append(BoundReport(
        check="induced map preserves the weighted norm on interior states",
        value=worst_norm, bound=1e-6, slack=1e-6 - worst_norm,
        passed=bool(worst_norm <= 1e-6 and not flagged),
        detail={"mass_loss_flagged": flagged}))

    checks.append(flows.generator_check(
        prof, lambda x: np.ones_like(x), nodes, psi))
    checks.append(flows.verify_gronwall(prof, xs, ts, tol=tol))
    checks.append(flows.verify_gronwall(
        prof, xs, ts, scale=float(cfg.opt("gronwall_scale", 0.25)), tol=tol))
    return Report(kind="flow-check", config=_config_echo(cfg), checks=checks)


# ---------------------------------------------------------------------------

def run_virial_scan(cfg: ExperimentConfig) -> Report:
    p = cfg.params
    liou = assemble_liouvillian(p)
    conj = assemble_conjugates(p, liou)
    a_full = (conj.full + conj.correction).tocsr()
    checks = [virial.eigenpair_residual_check(
        liou.liouvillian, a_full, n_pairs=int(cfg.opt("n_pairs", 10)))]

    from .linalg import eig_pairs_smallest
    evals, vecs = eig_pairs_smallest(liou.liouvillian, 1)
    psi = vecs[:, 0]
    alphas = tuple(cfg.opt("alphas",
                             (0.4, 0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625)))
    family = virial.build_regularized_family(
        psi, conj.full, liou.number, alphas, eigenvalue=float(evals[0]))
    checks.extend(virial.family_checks(family))

    cset = comm.assemble_commutator_set(p, liou, conj, with_direct=False)
    c1_direct = comm.commutator(liou.liouvillian, conj.full)
    scan = virial.commutator_expectation_scan(family, c1_direct)
    final = abs(scan[-1][1])
    checks.append(BoundReport(
        check="commutator expectation vanishes along the smoothed family",
        value=final, bound=1e-6, slack=1e-6 - final,
        passed=bool(final < 1e-6 and abs(scan[-1][1]) <= abs(scan[0][1])
                    + 1e-12),
        detail={"scan": [[a, v] for a, v in scan]}))

    i1 = comm.interaction_commutator(p, liou, conj.particle_gen, 1)
    k49 = comm.estimate_small_coupling_bound(p, liou, i1)
    c_op = (cset.c1 + conj.correction_comm).tocsr()
    import scipy.sparse as sp
    b_op = sp.diags((0.1 * liou.number + k49 * p.lam ** 2
                     * np.ones(liou.basis.dim)).astype(complex)) \
        - conj.correction_comm
    checks.append(virial.regularity_check(c_op, liou.number, b_op, family))

    tables = {"family_scan": {"columns": ["alpha", "residual"],
                              "rows": [[a, v] for a, v in scan]}}
    return Report(kind="virial-scan", config=_config_echo(cfg), checks=checks,
                  tables=tables)


# ---------------------------------------------------------------------------

def run_dynamics(cfg: ExperimentConfig) -> Report:
    p = cfg.params
    lams = list(cfg.opt("lambdas", (0.05, 0.1)))
    t_rec = dyn.recurrence_time(p)
    t_max = float(cfg.opt("t_max", 0.9 * t_rec))
    n_t = int(cfg.opt("n_times", 60))
    tol = float(cfg.opt("tol", 1e-8))
    times = np.linspace(0.0, t_max, n_t)
    checks = []
    series_out = []

    base = dyn.survival(p.with_(lam=0.0), times, tol=tol)
    dev0 = float(np.max(np.abs(np.real(base.values) - 1.0)))
    checks.append(BoundReport(
        check="uncoupled reference state is exactly invariant",
        value=dev0, bound=1e-12, slack=1e-12 - dev0,
        passed=bool(dev0 <= 1e-12), detail={}))
    series_out.append(base)

    def one(lam):
        return dyn.survival(p.with_(lam=lam), times, tol=tol)

    runs = _pmap(one, lams, cfg.jobs)
    fits = {}
    for lam, ser in zip(lams, runs):
        series_out.append(ser)
        fit = dyn.decay_rate(ser, window=cfg.opt("fit_window", None))
        fits[lam] = fit
        in_range = bool(np.all(np.real(ser.values) <= 1.0 + 1e-8)
                        and np.all(np.real(ser.values) >= -1e-8))
        checks.append(BoundReport(
            check=f"survival stays in [0,1] (lam={lam})",
            value=float(np.max(np.real(ser.values))), bound=1.0 + 1e-8,
            slack=1e-8, passed=in_range,
            detail={"rate": fit.rate, "residual": fit.residual,
                    "window": list(fit.window), "widened": fit.widened}))

    if lams:
        lam_big = max(lams)
        ser = runs[lams.index(lam_big)]
        val_min = float(np.min(np.real(ser.values)))
        checks.append(BoundReport(
            check="survival decays below one half before recurrence",
            value=val_min, bound=0.5, slack=0.5 - val_min,
            passed=bool(val_min < 0.5),
            detail={"lam": lam_big, "recurrence_time": t_rec}))

    if len(lams) == 2:
        r1, r2 = fits[lams[0]].rate, fits[lams[1]].rate
        expected = (lams[1] / lams[0]) ** 2
        ratio = r2 / r1 if r1 != 0 else np.inf
        rel = abs(ratio - expected) / expected
        checks.append(BoundReport(
            check="decay rate scales with the coupling squared",
            value=rel, bound=0.25, slack=0.25 - rel,
            passed=bool(rel <= 0.25),
            detail={"rates": {str(l): fits[l].rate for l in lams},
                    "ratio": ratio, "expected": expected}))

    ergodic = runs[-1].ergodic_mean() if runs else None
    tables = {}
    if ergodic is not None:
        tables["ergodic_mean"] = {
            "columns": ["time", "value"],
            "rows": [[t, v] for t, v in zip(times, ergodic)]}
    return Report(kind="dynamics", config=_config_echo(cfg), checks=checks,
                  series=series_out, tables=tables,
                  stats={"recurrence_time": t_rec,
                         "rates": {str(l): fits[l].rate for l in fits}})


# ---------------------------------------------------------------------------

def run_gjn(cfg: ExperimentConfig) -> Report:
    p = cfg.params
    liou = assemble_liouvillian(p)
    conj = assemble_conjugates(p, liou)
    cset = comm.assemble_commutator_set(p, liou, conj, with_direct=False)
    import scipy.sparse as sp

    targets = {
        "liouvillian": liou.liouvillian,
        "number": sp.diags(liou.number.astype(complex)).tocsr(),
        "number_commutator": liou.number_comm,
        "c1": cset.c1, "c2": cset.c2, "c3": cset.c3,
    }
    checks = []
    rows = []
    for name, op in targets.items():
        rep = comm.gjn_check(op, liou.comparison, name)
        rows.append([name, rep.k_norm, rep.k_form])
        ok = np.isfinite(rep.k_norm) and np.isfinite(rep.k_form)
        checks.append(BoundReport(
            check=f"relative bounds finite for {name}",
            value=max(rep.k_norm, rep.k_form), bound=np.inf,
            slack=np.inf if ok else -1.0, passed=bool(ok),
            detail={"k_norm": rep.k_norm, "k_form": rep.k_form}))

    for name, op in (("number_commutator", liou.number_comm),
                     ("c3", cset.c3)):
        k = comm.kato_half_power_bound(op, liou.number, liou.vacuum_proj)
        rows.append([f"{name}_vs_sqrt_number", k, np.nan])
        checks.append(BoundReport(
            check=f"{name} bounded by the square root of the number operator",
            value=k, bound=np.inf, slack=np.inf if np.isfinite(k) else -1.0,
            passed=bool(np.isfinite(k)), detail={"k": k}))

    checks.append(check_j(liou))
    tables = {"gjn_constants": {"columns": ["operator", "k_norm", "k_form"],
                                "rows": rows}}
    return Report(kind="gjn", config=_config_echo(cfg), checks=checks,
                  tables=tables)


# ---------------------------------------------------------------------------

def run_lambda0_scan(cfg: ExperimentConfig) -> Report:
    p = cfg.params
    lam_grid = list(cfg.opt("lambdas",
                            (1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1)))
    betas = tuple(cfg.opt("betas", (0.5, 1.0, 2.0)))
    rows, reports = fesh.scan_lambda0(p, lam_grid, betas,
                                      theta=cfg.opt("theta", None),
                                      epsilon=cfg.opt("epsilon", None))
    lam0 = [r[2] for r in rows]
    ratios = [r[3] for r in rows if r[3] > 0]
    decreasing = bool(all(np.diff(lam0) < 0)) if len(lam0) > 1 else False
    spread = (max(ratios) / min(ratios)) if ratios else np.inf
    checks = [
        BoundReport(
            check="coupling threshold decreases with inverse temperature",
            value=float(lam0[-1] - lam0[0]) if lam0 else np.nan, bound=0.0,
            slack=float(lam0[0] - lam0[-1]) if lam0 else -np.inf,
            passed=decreasing,
            detail={"lambda0": {str(b): l for b, _, l, _ in rows}}),
        BoundReport(
            check="threshold tracks the golden-rule constant",
            value=float(spread), bound=3.0, slack=3.0 - float(spread),
            passed=bool(np.isfinite(spread) and spread < 3.0),
            detail={"ratios": {str(r[0]): r[3] for r in rows}}),
    ]
    tables = {"lambda0_scan": {
        "columns": ["beta", "gamma", "lambda0", "lambda0_over_gamma"],
        "rows": [list(r) for r in rows]}}
    for beta, reps in reports.items():
        tables[f"min_eig_beta_{beta}"] = {
            "columns": ["lambda", "min_eig"],
            "rows": [[r.params["lam"], r.measured["m_min_eig"]]
                     for r in reps]}
    return Report(kind="lambda0-scan", config=_config_echo(cfg),
                  checks=checks, tables=tables)


PIPELINES = {
    "fgr": run_fgr,
    "bound-chain": run_bound_chain,
    "feshbach-fuzz": run_feshbach_fuzz,
    "flow-check": run_flow_check,
    "virial-scan": run_virial_scan,
    "dynamics": run_dynamics,
    "gjn": run_gjn,
    "lambda0-scan": run_lambda0_scan,
}


def run(cfg: ExperimentConfig) -> Report:
    if cfg.kind not in PIPELINES:
        raise ValueError(f"unknown experiment kind {cfg.kind!r}; "
                         f"choose from {sorted(PIPELINES)}")
    return PIPELINES[cfg.kind](cfg)
