"""Eigenvalue, norm and Krylov-propagation helpers.

Small problems go dense; large ones go through ARPACK / Lanczos with
deterministic start vectors so repeated runs give identical output.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh, eigh_tridiagonal, norm as dense_norm

DENSE_CUTOFF = 1500


def _as_matrix(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def _start_vector(n: int, seed: int = 12345) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(n)


def _power_norm(m, tol: float = 1e-10, max_iter: int = 500) -> float:
    """Deterministic power iteration on M* M (fallback when ARPACK balks,
    e.g. on diagonal operators with large kernels)."""
    v = _start_vector(m.shape[1]).astype(complex)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = m.conj().T @ (m @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = np.sqrt(nw)
        v = w / nw
        if abs(new - est) <= tol * max(new, 1.0):
            return float(new)
        est = new
    return float(est)


def operator_norm(m, tol: float = 1e-9) -> float:
    """Largest singular value."""
    if min(m.shape) <= DENSE_CUTOFF:
        return float(dense_norm(_as_matrix(m), 2))
    try:
        sv = spla.svds(m.tocsc() if sp.issparse(m) else m, k=1, tol=tol,
                       v0=_start_vector(m.shape[1]),
                       return_singular_vectors=False)
        return float(sv[0])
    except (spla.ArpackError, spla.ArpackNoConvergence):
        return _power_norm(m)


def min_eig_hermitian(m, tol: float = 1e-10, with_vector: bool = False):
    """Smallest eigenvalue of a Hermitian matrix (dense below the cutoff,
    ARPACK above, with a shifted retry on non-convergence)."""
    n = m.shape[0]
    if n <= DENSE_CUTOFF:
        if with_vector:
            w, v = eigh(_as_matrix(m), subset_by_index=[0, 0])
            return float(w[0]), v[:, 0]
        w = eigh(_as_matrix(m), eigvals_only=True, subset_by_index=[0, 0])
        return float(w[0])
    mc = m.tocsc() if sp.issparse(m) else m
    v0 = _start_vector(n)
    try:
        w, v = spla.eigsh(mc, k=1, which="SA", tol=tol, v0=v0,
                          maxiter=60 * n)
    except spla.ArpackNoConvergence:
        shift = operator_norm(mc) + 1.0
        w, v = spla.eigsh(mc - shift * sp.identity(n, dtype=mc.dtype,
                                                   format="csc"),
                          k=1, which="LM", tol=tol, v0=v0, maxiter=60 * n)
        w = w + shift
    return (float(w[0]), v[:, 0]) if with_vector else float(w[0])


def max_eig_hermitian(m, tol: float = 1e-10) -> float:
    n = m.shape[0]
    if n <= DENSE_CUTOFF:
        return float(eigh(_as_matrix(m), eigvals_only=True,
                          subset_by_index=[n - 1, n - 1])[0])
    w = spla.eigsh(m, k=1, which="LA", tol=tol, v0=_start_vector(n),
                   return_eigenvectors=False, maxiter=60 * n)
    return float(w[0])


def eig_pairs_smallest(m, k: int, tol: float = 1e-10):
    """k smallest eigenpairs of a Hermitian matrix."""
    n = m.shape[0]
    if n <= DENSE_CUTOFF or k >= n - 2:
        w, v = eigh(_as_matrix(m))
        return w[:k], v[:, :k]
    w, v = spla.eigsh(m, k=k, which="SA", tol=tol,
                      v0=_start_vector(n), maxiter=80 * n)
    order = np.argsort(w)
    return w[order], v[:, order]


def lanczos_decomposition(apply_op, v0: np.ndarray, m: int):
    """Hermitian Lanczos with full reorthogonalization.

    Returns (V, alpha, beta) with V of shape (k, n) (basis vectors as
    rows), k <= m; beta[k-1] is the residual coefficient of the next,
    unstored vector (0 on breakdown).  Row layout keeps the
    reorthogonalization free of large transposed copies.
    """
    n = v0.shape[0]
    m = min(m, n)
    V = np.zeros((m + 1, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v0 / np.linalg.norm(v0)
    for j in range(m):
        w = apply_op(V[j])
        a = np.vdot(V[j], w)
        alpha[j] = a.real
        w = w - a * V[j]
        if j > 0:
            w = w - beta[j - 1] * V[j - 1]
        # full reorthogonalization: cheap at these subspace sizes and it
        # keeps the propagation unitary to near machine precision
        overlaps = np.conj(V[: j + 1] @ np.conj(w))
        w = w - overlaps @ V[: j + 1]
        b = np.linalg.norm(w)
        beta[j] = b
        if b < 1e-13:
            return V[: j + 1], alpha[: j + 1], beta[: j + 1]
        V[j + 1] = w / b
    return V[:m], alpha[:m], beta[:m]


def expm_multiply_hermitian(apply_op, psi: np.ndarray, t: float,
                            tol: float = 1e-9, m_max: int = 60):
    """exp(-i t Op) psi for Hermitian Op, by restarted Lanczos stepping.

    Within one Krylov space the step is cut until the standard residual
    estimate (last-component coefficient times the next beta) meets the
    per-step error budget; the budget is tol scaled by the step fraction.
    """
    if t == 0.0:
        return psi.astype(complex).copy()
    psi = psi.astype(complex)
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        return psi.copy()
    remaining = float(t)
    total = abs(t)
    cur = psi.copy()
    sign = 1.0
    while abs(remaining) > 1e-15 * total:
        V, alpha, beta = lanczos_decomposition(apply_op, cur, m_max)
        k = len(alpha)
        evals, evecs = eigh_tridiagonal(alpha, beta[: k - 1]) if k > 1 else (
            alpha.copy(), np.ones((1, 1)))
        e1 = evecs[0, :].conj()
        dt = remaining
        while True:
            phases = np.exp(-1j * dt * evals)
            small = evecs @ (phases * e1)
            err = abs(beta[k - 1]) * abs(small[-1]) * abs(dt) if k > 1 else 0.0
            budget = tol * abs(dt) / total
            if err <= budget or abs(dt) < 1e-12 * total or k == cur.shape[0]:
                break
            dt *= 0.5
        cur = np.linalg.norm(cur) * (small @ V)
        remaining -= dt
    # one global norm audit: the exact flow is unitary
    drift = abs(np.linalg.norm(cur) - nrm)
    if drift > 1e3 * tol * max(1.0, nrm):
        raise RuntimeError(f"propagation lost unitarity: drift {drift:.2e}")
    return cur
