"""Regularized eigenvector families and virial-type residual checks.

For an exact eigenpair the expectation of any commutator vanishes by
algebra; the interest at finite truncation is (i) the quantitative residual
bound when the eigenpair is only approximate and (ii) the behaviour of the
smoothed families built from a bandlimited function of the conjugate
operator and a compactly supported function of the boson number, with the
cube-law linkage between the two cutoff scales.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh

from .linalg import eig_pairs_smallest, min_eig_hermitian
from .reports import BoundReport

_BUMP_GRID = np.linspace(-1.0 + 1e-9, 1.0 - 1e-9, 2001)


def bump(s):
    """Standard compactly supported bump on (-1, 1), value 1 at 0."""
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def bandlimited_mollifier(x):
    """Real bounded function with value 1 at 0 whose transform is the bump
    above (hence compactly supported): f(x) = c * int bump(s) cos(s x) ds.

    |f| <= f(0) = 1 because the bump is nonnegative.
    """
    x = np.atleast_1d(np.asarray(x, float))
    w = bump(_BUMP_GRID)
    integral = np.trapezoid(w[None, :] * np.cos(np.outer(x, _BUMP_GRID)),
                            _BUMP_GRID, axis=1)
    norm = np.trapezoid(w, _BUMP_GRID)
    return integral / norm


def virial_residual(l_op, a_op, psi: np.ndarray) -> float:
    """<psi, i[L, A] psi> computed in commutator-free form
    -2 Im <L psi, A psi>; exactly zero for exact eigenpairs."""
    lp = l_op @ psi
    ap = a_op @ psi
    return float(-2.0 * np.imag(np.vdot(lp, ap)))


def eigenpair_residual_check(l_op, a_op, n_pairs: int = 10,
                             tol: float = 1e-10) -> BoundReport:
    """For approximate eigenpairs, |<i[L,A]>| <= 2 ||(L-e)psi|| ||A psi||
    (an algebraic identity up to the eigenresidual)."""
    evals, vecs = eig_pairs_smallest(l_op, n_pairs, tol=tol)
    worst = -np.inf
    rows = []
    for k in range(vecs.shape[1]):
        psi = vecs[:, k]
        e = float(np.real(np.vdot(psi, l_op @ psi)))
        r = float(np.linalg.norm(l_op @ psi - e * psi))
        lhs = abs(virial_residual(l_op, a_op, psi))
        rhs = 2.0 * r * float(np.linalg.norm(a_op @ psi)) + 1e-14
        rows.append((e, r, lhs, rhs))
        worst = max(worst, lhs - rhs)
    return BoundReport(
        check="virial residual bounded by eigenresidual",
        value=worst, bound=0.0, slack=-worst, passed=bool(worst <= 0.0),
        detail={"pairs": [{"eig": e, "residual": r, "lhs": l, "rhs": rh}
                          for e, r, l, rh in rows]})


@dataclass
class RegularizedFamily:
    """psi smoothed by f(alpha A) g^2(nu N) at a ladder of scales."""

    base: np.ndarray
    alphas: tuple
    vectors: list               # one per alpha, nu = alpha^3
    base_eigenvalue: float


def build_regularized_family(psi: np.ndarray, a_op, number_diag: np.ndarray,
                             alphas=(0.4, 0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625),
                             eigenvalue: float = 0.0) -> RegularizedFamily:
    """Spectral-calculus construction of the smoothed family.

    The conjugate operator gets a dense eigendecomposition (kept feasible
    by small scan dimensions); the number operator is diagonal.
    """
    dense = a_op.toarray() if sp.issparse(a_op) else np.asarray(a_op)
    w, v = eigh(dense)
    coeffs = v.conj().T @ psi
    vectors = []
    for alpha in alphas:
        nu = alpha ** 3
        fa = bandlimited_mollifier(alpha * w)
        smoothed = v @ (fa * coeffs)
        gn = bump(nu * number_diag) ** 2
        vectors.append(gn * smoothed)
    return RegularizedFamily(psi, tuple(alphas), vectors, eigenvalue)


def family_checks(family: RegularizedFamily) -> list:
    """Norm bound and convergence of the smoothed family to its base."""
    base_norm = np.linalg.norm(family.base)
    norms = [np.linalg.norm(vc) for vc in family.vectors]
    gaps = [np.linalg.norm(vc - family.base) for vc in family.vectors]
    out = [
        BoundReport(
            check="smoothed family stays norm bounded",
            value=float(max(norms)), bound=float(base_norm * (1 + 1e-12)),
            slack=float(base_norm * (1 + 1e-12) - max(norms)),
            passed=bool(max(norms) <= base_norm * (1 + 1e-12)),
            detail={"norms": [float(n) for n in norms]}),
        BoundReport(
            check="smoothed family converges to the eigenvector",
            value=float(gaps[-1]), bound=float(gaps[0]),
            slack=float(gaps[0] - gaps[-1]),
            passed=bool(all(np.diff(gaps) < 1e-12)),
            detail={"gaps": [float(g) for g in gaps]}),
    ]
    return out


def commutator_expectation_scan(family: RegularizedFamily, c_op) -> list:
    """<C>_psi_alpha along the family (should tend to the exact value 0
    for an exact finite-dimensional eigenpair)."""
    out = []
    for alpha, vc in zip(family.alphas, family.vectors):
        n = np.linalg.norm(vc)
        val = float(np.real(np.vdot(vc, c_op @ vc))) / max(n * n, 1e-300)
        out.append((alpha, val))
    return out


def regularity_check(c_op, p_diag: np.ndarray, b_op,
                     family: RegularizedFamily,
                     tol: float = 1e-8) -> BoundReport:
    """Given C >= P - B as forms (verified on the family), the limit vector
    satisfies <B> >= 0 and ||P^{1/2} psi||^2 <= <B> + tol."""
    psi = family.base
    hyp_worst = np.inf
    for vc in family.vectors:
        n2 = float(np.real(np.vdot(vc, vc)))
        if n2 == 0:
            continue
        lhs = float(np.real(np.vdot(vc, c_op @ vc)))
        rhs = float(np.real(np.vdot(vc, p_diag * vc))
                    - np.real(np.vdot(vc, b_op @ vc)))
        hyp_worst = min(hyp_worst, (lhs - rhs) / n2)
    b_exp = float(np.real(np.vdot(psi, b_op @ psi)))
    p_exp = float(np.real(np.vdot(psi, p_diag * psi)))
    ok = hyp_worst >= -tol and b_exp >= -tol and p_exp <= b_exp + tol
    return BoundReport(
        check="eigenvector regularity bound from the form inequality",
        value=p_exp, bound=b_exp + tol, slack=b_exp + tol - p_exp,
        passed=bool(ok),
        detail={"form_hypothesis_slack": hyp_worst, "b_expectation": b_exp})
