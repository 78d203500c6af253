"""Acceptance suite: one test per criterion, at pinned tolerances.

Each test prints a single PASS/FAIL line (visible with pytest -s).  The
criteria probing the smallness regime of the positivity argument (5, 9's
rate-scaling part, 10) are known to be unreachable at desk-scale
truncation for the shipped couplings; they are asserted exactly as stated
and fail honestly.  The measured obstruction constants are in the run
reports.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from thermion.commutators import product_boson_amplitudes
from thermion.dynamics import recurrence_time, survival
from thermion.experiments import ExperimentConfig, run
from thermion.feshbach import (scaled_to_limit_convergence, scan_lambda0,
                               verify_bound_chain)
from thermion.fgr import (eps_convergence, gamma_limit, gamma_regularized,
                          operator_side_rate)
from thermion.lattice import build_bases
from thermion.linalg import eig_pairs_smallest
from thermion.operators import (assemble_conjugates, assemble_field_ops,
                                assemble_liouvillian, apply_j, check_j,
                                kron3)
from thermion.params import ModelParams
from thermion.reports import report_to_json
from thermion.virial import (build_regularized_family,
                             commutator_expectation_scan, virial_residual)


def _line(num, ok, text):
    print(f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'}: {text}")


def test_criterion_01_commutator_identity_order():
    t0 = time.time()
    errs = []
    for nu in (16, 32, 64):
        p = ModelParams(n_e=2, n_u=nu, n_max=2, e_max=2.0, u_max=4.0)
        b = build_bases(p)
        fops = assemble_field_ops(b.fock)
        ident_p = sp.identity(b.left.dim, format="csr", dtype=complex)
        liou = assemble_liouvillian(p, b)
        l0 = sp.diags(liou.l0_diag.astype(complex))
        a_f = kron3(fops.translation_gen, ident_p, ident_p)
        comm = (1j * (l0 @ a_f - a_f @ l0)).tocsr()
        n_op = sp.diags(liou.number.astype(complex))

        pu = np.exp(-((b.fock.grid.nodes - 0.5)) ** 2)
        fock = product_boson_amplitudes(b.fock, pu)
        fock[b.fock.occupation_numbers != 2] = 0.0
        pe = np.concatenate(([0.0], np.exp(-(b.left.grid.nodes - 1.0) ** 2)))
        psi = (fock[:, None, None] * pe[None, None, :]
               * pe[None, :, None]).ravel().astype(complex)
        psi /= np.linalg.norm(psi)
        errs.append(np.linalg.norm((comm - n_op) @ psi))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    elapsed = time.time() - t0
    ok = bool(np.all(orders >= 1.9) and elapsed < 60)
    _line(1, ok, f"identity error orders {np.round(orders, 3)} "
          f"in {elapsed:.1f}s")
    assert np.all(orders >= 1.9), orders
    assert elapsed < 60


def test_criterion_02_golden_rule_positivity():
    t0 = time.time()
    p = ModelParams()   # shipped defaults: beta=1, E=-1, power-law shapes
    glim = gamma_limit(p)
    adaptive = gamma_regularized(p, 0.2, method="adaptive")
    midpoint = gamma_regularized(p, 0.2, method="midpoint")
    rel = abs(adaptive - midpoint) / abs(adaptive)
    conv = eps_convergence(p, (0.2, 0.1, 0.05, 0.025))
    elapsed = time.time() - t0
    ok = glim > 0 and rel <= 1e-6 and conv.passed and elapsed < 60
    _line(2, ok, f"gamma={glim:.4f}, oracle agreement {rel:.2e}, "
          f"linear-width spread {conv.value:.3f}, {elapsed:.1f}s")
    assert glim > 0
    assert rel <= 1e-6
    assert conv.passed, conv
    assert elapsed < 60


def test_criterion_03_operator_integral_consistency():
    eps = 0.5
    rels = {}
    for n in (32, 64):
        p = ModelParams(n_e=n, n_u=n, n_max=1)
        ops = operator_side_rate(p, eps)
        quad_val = gamma_regularized(p, eps)
        rels[n] = abs(ops - quad_val) / abs(quad_val)
    ok = rels[64] <= 0.05 and rels[64] < rels[32]
    _line(3, ok, f"relative mismatch {rels[64]:.4f} at n=64 "
          f"(n=32: {rels[32]:.4f})")
    assert rels[64] <= 0.05
    assert rels[64] < rels[32]


def test_criterion_04_feshbach_isospectrality():
    t0 = time.time()
    cfg = ExperimentConfig(kind="feshbach-fuzz", seed=2024, jobs=2,
                           options={"instances": 200, "dim_max": 20})
    rep = run(cfg)
    elapsed = time.time() - t0
    worst = rep.checks[0].value
    ok = rep.checks[0].passed and elapsed < 30
    _line(4, ok, f"200 instances, worst scaled determinant {worst:.2e}, "
          f"{elapsed:.1f}s")
    assert rep.checks[0].passed, rep.checks[0]
    assert elapsed < 30


def test_criterion_05_bound_chain():
    t0 = time.time()
    p = ModelParams(n_e=24, n_u=24, n_max=1)
    dim = (1 + p.n_e) ** 2 * (1 + p.n_u)
    assert dim <= 5e4
    rep = verify_bound_chain(p)
    elapsed = time.time() - t0
    dom, comp, fesh, posit = (rep.steps[0], rep.steps[1], rep.steps[2],
                              rep.steps[3])
    ok = dom.passed and comp.passed and fesh.passed and posit.passed \
        and elapsed < 600
    _line(5, ok,
          f"domination {dom.value:.2e} (>= {dom.bound:.2e}), complement "
          f"{comp.value:.3f} (> 0.5), positivity {posit.value:.3e} vs "
          f"target {posit.bound:.3e}; recipe feasible: "
          f"{rep.recipe.recipe_feasible}, needs n_e ~ "
          f"{rep.recipe.n_e_required}; {elapsed:.0f}s")
    assert elapsed < 600
    assert dom.passed, dom
    assert comp.passed, comp
    # the remaining two inequalities need the width of the smallness
    # regime resolved on the grid; the report's recipe block carries the
    # measured obstruction (k49/gamma ~ 2e3 forces n_e ~ 1e7 here)
    assert fesh.passed, (fesh, rep.recipe)
    assert posit.passed, (posit, rep.recipe)


def test_criterion_06_scaled_operator_converges():
    p = ModelParams(n_e=12, n_u=12, n_max=1)
    liou = assemble_liouvillian(p)
    rep = scaled_to_limit_convergence(
        p, liou, a_values=(0.5, 0.25, 0.125, 0.0625), n_vectors=20)
    _line(6, rep.passed, f"monotone over the scale ladder, worst gap "
          f"{rep.value:.3e}")
    assert rep.passed, rep


def test_criterion_07_virial():
    p = ModelParams(n_e=6, n_u=8, n_max=1, e_max=4.0, u_max=4.0, lam=0.1)
    liou = assemble_liouvillian(p)
    conj = assemble_conjugates(p, liou)
    a_full = (conj.full + conj.correction).tocsr()
    evals, vecs = eig_pairs_smallest(liou.liouvillian, 10)
    worst = -np.inf
    for k in range(vecs.shape[1]):
        psi = vecs[:, k]
        e = float(np.real(np.vdot(psi, liou.liouvillian @ psi)))
        r = np.linalg.norm(liou.liouvillian @ psi - e * psi)
        lhs = abs(virial_residual(liou.liouvillian, a_full, psi))
        rhs = 2 * r * np.linalg.norm(a_full @ psi) + 1e-14
        worst = max(worst, lhs - rhs)

    from thermion.commutators import commutator
    family = build_regularized_family(vecs[:, 0], conj.full, liou.number,
                                      eigenvalue=float(evals[0]))
    scan = commutator_expectation_scan(
        family, commutator(liou.liouvillian, conj.full))
    final = abs(scan[-1][1])
    ok = worst <= 0 and final < 1e-6
    _line(7, ok, f"10 eigenpair residual slack {-worst:.2e}, family scan "
          f"endpoint {final:.2e}")
    assert worst <= 0
    assert final < 1e-6


def test_criterion_08_flow_unitary():
    cfg = ExperimentConfig(kind="flow-check", seed=0,
                           options={"n_points": 50})
    rep = run(cfg)
    ok = rep.all_passed
    _line(8, ok, "; ".join(f"{c.check.split(',')[0]}: "
                           f"{'ok' if c.passed else 'FAIL'}"
                           for c in rep.checks))
    for c in rep.checks:
        assert c.passed, c


def test_criterion_09_ionization_signature():
    t0 = time.time()
    p = ModelParams(n_e=8, n_u=48, n_max=2, e_max=5.0, u_max=5.0)
    t_rec = recurrence_time(p)

    times0 = np.linspace(0.0, min(20.0, 0.8 * t_rec), 9)
    base = survival(p.with_(lam=0.0), times0, tol=1e-8)
    exact0 = bool(np.max(np.abs(np.real(base.values) - 1.0)) < 1e-12)

    cfg = ExperimentConfig(
        kind="dynamics", seed=0, jobs=1,
        params=p,
        options={"lambdas": [0.05, 0.1], "t_max": 0.8 * t_rec,
                 "n_times": 40, "tol": 1e-7})
    rep = run(cfg)
    elapsed = time.time() - t0
    below = next(c for c in rep.checks if "below one half" in c.check)
    ratio = next(c for c in rep.checks if "coupling squared" in c.check)
    ok = exact0 and below.passed and ratio.passed and elapsed < 900
    _line(9, ok, f"uncoupled exact: {exact0}; min survival "
          f"{below.value:.3f} (< 0.5 before T_rec={t_rec:.1f}); rate ratio "
          f"{ratio.detail['ratio']:.2f} vs 4 (rates "
          f"{ratio.detail['rates']}); {elapsed:.0f}s")
    assert exact0
    assert below.passed, below
    assert elapsed < 900
    # note the regime: the dressing weight lam^2 sum|c|^2/l^2 is 2.6 and
    # 10.4 at lam = 0.05, 0.1, so the fitted rates saturate below the
    # perturbative prediction; the ratio is measured as-is
    assert ratio.passed, ratio


def test_criterion_10_threshold_trend():
    t0 = time.time()
    p = ModelParams(n_e=8, n_u=8, n_max=1, e_max=4.0, u_max=4.0)
    rows, _ = scan_lambda0(p, (1e-4, 1e-3, 1e-2), betas=(0.5, 1.0, 2.0))
    lam0 = [r[2] for r in rows]
    gammas = [r[1] for r in rows]
    ratios = [r[3] for r in rows if r[3] > 0]
    decreasing = all(np.diff(lam0) < 0)
    spread = max(ratios) / min(ratios) if ratios else np.inf
    elapsed = time.time() - t0
    ok = decreasing and spread < 3.0
    _line(10, ok, f"lambda0 per beta {lam0}, gamma per beta "
          f"{np.round(gammas, 3).tolist()}, ratio spread {spread}; "
          f"{elapsed:.0f}s")
    # no coupling on the grid passes the full chain at this truncation
    # (same obstruction as criterion 5), so the trend is vacuously flat
    assert decreasing, lam0
    assert spread < 3.0


def test_criterion_11_modular_structure():
    p = ModelParams(n_e=6, n_u=12, n_max=1, e_max=4.0, u_max=4.0)
    b = build_bases(p)
    conj = apply_j(b)
    rng = np.random.default_rng(8)
    worst_sq = 0.0
    for _ in range(100):
        v = rng.standard_normal(b.dim) + 1j * rng.standard_normal(b.dim)
        v /= np.linalg.norm(v)
        worst_sq = max(worst_sq,
                       np.linalg.norm(conj.apply(conj.apply(v)) - v))
    reps = {}
    for lam in (0.0, 0.1):
        liou = assemble_liouvillian(p.with_(lam=lam), b)
        reps[lam] = check_j(liou, n_vectors=20, tol=1e-10)
    ok = worst_sq < 1e-14 and all(r.passed for r in reps.values())
    _line(11, ok, f"involution defect {worst_sq:.2e}, anticommutation "
          f"residuals {[f'{r.value:.2e}' for r in reps.values()]}")
    assert worst_sq < 1e-14
    for lam, rep in reps.items():
        assert rep.passed, (lam, rep)


def test_criterion_12_determinism(tmp_path):
    texts = {}
    for tag, jobs in (("a", 1), ("b", 3)):
        cfg = ExperimentConfig(kind="feshbach-fuzz", seed=77, jobs=jobs,
                               options={"instances": 30, "dim_max": 16})
        texts[tag] = report_to_json(run(cfg))
    ok = texts["a"] == texts["b"]
    _line(12, ok, f"byte-identical across worker counts: {ok}")
    assert ok
