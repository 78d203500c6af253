"""Model parameters: coupling data, grids and truncations.

All physics enters through three ingredients: a form factor g(omega) giving
the frequency profile of the field coupling, a particle-space kernel (bound
state coupling vector Gamma(e) plus a continuum-continuum block K(e, e')),
and the scalar parameters (inverse temperature, coupling strength, the
regulator scales used by the finite-rank commutator correction).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable


def falling_product(p: float, k: int) -> float:
    """p (p-1) ... (p-k+1); empty product = 1."""
    out = 1.0
    for i in range(k):
        out *= p - i
    return out


@dataclass(frozen=True)
class PowerExpProfile:
    """x^p * exp(-x) with closed-form derivatives of any order.

    Used for the default form factor (p = 5/2) and the default bound-state
    coupling (p = 3).  Derivatives follow from the Leibniz rule; powers of x
    with negative exponent only ever get evaluated at x > 0.
    """

    power: float
    scale: float = 1.0

    def __call__(self, x, deriv: int = 0):
        import numpy as np

        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k in range(deriv + 1):
            coeff = (
                math.comb(deriv, k)
                * falling_product(self.power, k)
                * (-1.0) ** (deriv - k)
            )
            with np.errstate(divide="ignore", invalid="ignore"):
                term = np.where(x > 0, x ** (self.power - k), 0.0)
            out = out + coeff * term
        res = self.scale * out * np.exp(-np.where(x > 0, x, 0.0))
        res = np.where(x > 0, res, 0.0)
        return res if res.shape else float(res)


@dataclass(frozen=True)
class FormFactor:
    """Frequency profile of one coupling term, with envelope constants.

    ``g(omega, deriv)`` must be defined for omega > 0 and support derivative
    orders 0..4.  The envelope constants feed the infrared/ultraviolet
    hypothesis checker: |g^(j)| <= k2 * omega^(p-j) below k1 and
    |g^(j)| <= K2 * omega^(-q-j) above big_k1.
    """

    g: Callable = field(default_factory=lambda: PowerExpProfile(2.5))
    ir_exponent: float = 2.5
    uv_exponent: float = 4.0
    k1: float = 0.5
    k2: float = 4.0
    big_k1: float = 8.0
    big_k2: float = 2.0e6

    def __call__(self, omega, deriv: int = 0):
        return self.g(omega, deriv)


@dataclass(frozen=True)
class Kernel:
    """Particle-space coupling in the energy representation.

    ``gamma(e, deriv)`` is the bound-to-continuum coupling profile,
    ``k(e, e', d1, d2)`` the continuum-continuum block (must be Hermitian:
    conj(k(e, e')) == k(e', e)), and ``g_ee`` the real bound-bound scalar.
    The default is the rank-one choice k(e,e') = gamma(e) gamma(e') with
    g_ee = 1, i.e. the whole coupling matrix is |v><v| for v = (1, gamma).
    """

    gamma: Callable = field(default_factory=lambda: PowerExpProfile(3.0))
    g_ee: float = 1.0

    def k(self, e, ep, d1: int = 0, d2: int = 0):
        return self.gamma(e, d1) * self.gamma(ep, d2)


@dataclass(frozen=True)
class ModelParams:
    """Every knob of the truncated model in one immutable bundle."""

    beta: float = 1.0          # inverse temperature, > 0
    lam: float = 0.1           # coupling constant, real
    theta: float = 0.0625      # finite-rank correction strength, > 0
    epsilon: float = 0.05      # resolvent regulator, > 0
    a: float = 0.5             # dilation scale of the conjugate operator, > 0
    bound_energy: float = -1.0  # eigenvalue of the particle Hamiltonian, < 0

    e_max: float = 6.0
    n_e: int = 16
    u_max: float = 6.0
    n_u: int = 32
    n_max: int = 1
    fiber_dim: int = 1
    n_sigma: int = 1
    angular_weight: float = 4.0 * math.pi

    form_factor: FormFactor = field(default_factory=FormFactor)
    kernel: Kernel = field(default_factory=Kernel)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.a <= 0:
            raise ValueError("conjugate-operator scale a must be positive")
        if self.bound_energy >= 0:
            raise ValueError("bound state energy must be negative")
        if self.n_u % 2 != 0 or self.n_u < 2:
            raise ValueError("n_u must be even and >= 2 (frequency grid must "
                             "be symmetric under u -> -u)")
        if self.fiber_dim != 1:
            raise NotImplementedError("only scalar fibers are implemented")

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)
