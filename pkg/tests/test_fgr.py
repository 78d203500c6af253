import numpy as np
import pytest

from thermion.fgr import (check_hypotheses, check_ir_uv,
                          check_kernel_integrals, eps_convergence,
                          gamma_limit, gamma_regularized, golden_rule,
                          operator_vs_quadrature, thermal_factor)
from thermion.params import (FormFactor, Kernel, ModelParams,
                             PowerExpProfile)


def test_zero_form_factor_gives_zero_rate():
    p = ModelParams(form_factor=FormFactor(g=PowerExpProfile(2.5, 0.0)))
    assert gamma_limit(p) == 0.0
    assert gamma_regularized(p, 0.1) == 0.0


def test_zero_kernel_gives_zero_rate():
    p = ModelParams(kernel=Kernel(gamma=PowerExpProfile(3.0, 0.0), g_ee=0.0))
    assert gamma_limit(p) == 0.0


def test_rate_positive_for_defaults():
    assert gamma_limit(ModelParams()) > 0.0


def test_quadrature_oracles_agree():
    p = ModelParams()
    for method_pair in ((0.2,), (0.05,)):
        eps = method_pair[0]
        a = gamma_regularized(p, eps, method="adaptive")
        m = gamma_regularized(p, eps, method="midpoint")
        assert abs(a - m) / abs(a) < 1e-6
    a = gamma_limit(p, method="adaptive")
    m = gamma_limit(p, method="midpoint")
    assert abs(a - m) / abs(a) < 1e-9


def test_regularized_rate_nonnegative_and_linear_in_width():
    p = ModelParams()
    rep = eps_convergence(p)
    assert rep.passed, rep
    for eps in (0.2, 0.05):
        assert gamma_regularized(p, eps) >= 0.0


def test_rate_decays_exponentially_in_beta():
    # gamma ~ exp(beta E): ratios between successive doublings stay within
    # a factor consistent with exponential decay in beta
    vals = [gamma_limit(ModelParams(beta=b)) for b in (1.0, 2.0, 4.0)]
    assert vals[0] > vals[1] > vals[2] > 0
    drop1 = vals[0] / vals[1]
    drop2 = vals[1] / vals[2]
    # |E| = 1: crude model predicts drops of order e^{1}, e^{2}
    assert drop1 > np.exp(0.5)
    assert drop2 > drop1


def test_rate_vanishes_without_resonant_support():
    # form factor supported below -E: empty resonance window
    class Cut:
        power = 2.5
        scale = 1.0

        def __call__(self, w, deriv=0):
            w = np.asarray(w, float)
            base = PowerExpProfile(2.5)(w, deriv)
            return np.where(w < 0.9, base, 0.0)

    p = ModelParams(form_factor=FormFactor(g=Cut()))
    assert gamma_limit(p) == pytest.approx(0.0, abs=1e-12)


def test_rejects_bad_eps():
    with pytest.raises(ValueError):
        gamma_regularized(ModelParams(), -0.1)


def test_thermal_factor_stable():
    w = np.array([1e-9, 1.0, 700.0])
    v = thermal_factor(w, 1.0)
    assert np.all(np.isfinite(v))
    assert v[0] == pytest.approx(1e-9, rel=1e-3)


def test_ir_uv_envelopes_pass_for_default():
    rep = check_ir_uv(ModelParams())
    assert rep.passed, rep.detail


def test_ir_check_fails_for_slow_infrared():
    # exponent 1 violates the > 2 requirement
    ff = FormFactor(g=PowerExpProfile(1.0), ir_exponent=1.0)
    rep = check_ir_uv(ModelParams(form_factor=ff))
    assert not rep.passed


def test_kernel_integrals_finite():
    rep = check_kernel_integrals(ModelParams())
    assert rep.passed


def test_hypothesis_bundle():
    reps = check_hypotheses(ModelParams())
    assert all(r.passed for r in reps)


def test_golden_rule_bundle_has_requested_widths():
    res = golden_rule(ModelParams(), eps_list=(0.2, 0.1))
    assert set(res.gamma_eps) == {0.2, 0.1}
    assert res.gamma_limit > 0
    assert res.cutoffs["omega"] > 1.0


def test_operator_vs_quadrature_small_grid():
    p = ModelParams(n_e=32, n_u=32, n_max=1)
    rep = operator_vs_quadrature(p, eps=0.5, rel_tol=0.05)
    assert rep.passed, rep
