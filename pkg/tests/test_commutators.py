import numpy as np
import pytest
import scipy.sparse as sp

from thermion.commutators import (assemble_commutator_set, commutator,
                                  estimate_small_coupling_bound, gjn_check,
                                  interaction_commutator,
                                  kato_half_power_bound,
                                  small_coupling_stability,
                                  smooth_test_states)
from thermion.lattice import build_bases
from thermion.linalg import min_eig_hermitian, operator_norm
from thermion.operators import (assemble_conjugates, assemble_liouvillian,
                                hermiticity_defect)
from thermion.params import ModelParams


@pytest.fixture(scope="module")
def setup():
    p = ModelParams(n_e=8, n_u=16, n_max=1, e_max=4.0, u_max=4.0, lam=0.1)
    liou = assemble_liouvillian(p)
    conj = assemble_conjugates(p, liou)
    return p, liou, conj


def test_self_commutator_vanishes(setup):
    p, liou, conj = setup
    c = commutator(liou.liouvillian, liou.liouvillian)
    assert abs(c).max() < 1e-12


def test_diagonal_offdiagonal_closed_form():
    d = sp.diags(np.array([1.0, 3.0, -2.0], dtype=complex)).tocsr()
    e = sp.csr_matrix((np.array([1.0 + 0j]), (np.array([0]), np.array([2]))),
                      shape=(3, 3))
    e = (e + e.conj().T).tocsr()
    c = commutator(d, e)
    # i [diag, |0><2|-part]: entries i (d_j - d_k) e_{jk}
    assert np.isclose(c[0, 2], 1j * (1.0 - (-2.0)))
    assert np.isclose(c[2, 0], 1j * ((-2.0) - 1.0))


def test_commutator_rejects_shape_mismatch(setup):
    p, liou, conj = setup
    with pytest.raises(ValueError):
        commutator(liou.liouvillian, sp.identity(3, dtype=complex))


def test_commutator_set_hermitian_and_converging(setup):
    p, liou, conj = setup
    cs = assemble_commutator_set(p, liou, conj)
    for op in (cs.c1, cs.c2, cs.c3, cs.c1_direct, cs.c2_direct,
               cs.c3_direct):
        assert hermiticity_defect(op) == 0.0
    prev = np.array(cs.discrepancies)
    p2 = p.with_(n_e=16, n_u=32)
    liou2 = assemble_liouvillian(p2)
    conj2 = assemble_conjugates(p2, liou2)
    cs2 = assemble_commutator_set(p2, liou2, conj2)
    orders = np.log2(prev / np.array(cs2.discrepancies))
    assert np.all(orders >= 1.5), orders


def test_c1_at_zero_coupling_matches_free_commutator(setup):
    p, liou, conj = setup
    p0 = p.with_(lam=0.0)
    liou0 = assemble_liouvillian(p0)
    conj0 = assemble_conjugates(p0, liou0)
    cs = assemble_commutator_set(p0, liou0, conj0)
    # closed form: profile on both factors plus the number operator
    xi = np.concatenate(([0.0],
                         liou0.basis.left.grid.nodes
                         / (p.a + liou0.basis.left.grid.nodes)))
    dp = liou0.basis.left.dim
    ones = np.ones(dp)
    onef = np.ones(liou0.basis.fock.dim)
    diag = (np.kron(onef, np.kron(ones, xi))
            + np.kron(onef, np.kron(xi, ones)) + liou0.number)
    assert abs(cs.c1 - sp.diags(diag.astype(complex))).max() < 1e-12
    # and the direct commutator approaches it on smooth states
    psi = smooth_test_states(liou0.basis, 1)[0]
    assert np.linalg.norm((cs.c1 - cs.c1_direct) @ psi) < 0.7


def test_large_scale_limit_kills_particle_profile(setup):
    p, liou, conj = setup
    pa = p.with_(a=1e6)
    lioua = assemble_liouvillian(pa)
    conja = assemble_conjugates(pa, lioua)
    cs = assemble_commutator_set(pa, lioua, conja)
    # xi(e/a) -> e/a -> 0: c1 reduces to N + lam I1 up to O(1/a)
    i1 = interaction_commutator(pa, lioua, conja.particle_gen, 1)
    rest = cs.c1 - sp.diags(lioua.number.astype(complex)) - pa.lam * i1
    assert operator_norm(rest) < 1e-5


def test_field_derivative_commutator_brute_force(setup):
    # i[phi(f), A_f] = phi(D f) exactly on the truncation
    p, liou, conj = setup
    from thermion.operators import (assemble_field_ops, field_op, kron3)
    basis = liou.basis
    fops = assemble_field_ops(basis.fock)
    f = liou.vectors.direct
    phi = field_op(basis.fock, f)
    lhs = 1j * (phi @ fops.translation_gen - fops.translation_gen @ phi)
    rhs = field_op(basis.fock, fops.mode_derivative @ f)
    assert abs(lhs - rhs).max() < 1e-12


def test_number_commutes_with_conjugate_operator(setup):
    p, liou, conj = setup
    n_op = sp.diags(liou.number.astype(complex))
    assert abs(n_op @ conj.full - conj.full @ n_op).max() == 0.0


def test_gjn_identity_case(setup):
    p, liou, conj = setup
    lam_diag = liou.comparison
    rep = gjn_check(sp.diags(lam_diag.astype(complex)).tocsr(), lam_diag,
                    "comparison")
    assert np.isclose(rep.k_norm, 1.0)
    assert rep.k_form < 1e-10


def test_gjn_number_dominated(setup):
    p, liou, conj = setup
    rep = gjn_check(sp.diags(liou.number.astype(complex)).tocsr(),
                    liou.comparison, "number")
    assert rep.k_norm <= 1.0 + 1e-12
    assert rep.k_form < 1e-10


def test_gjn_rejects_small_comparison(setup):
    p, liou, conj = setup
    with pytest.raises(ValueError):
        gjn_check(liou.liouvillian, 0.2 * liou.comparison, "bad")


def test_kato_bound_for_number_commutator(setup):
    p, liou, conj = setup
    k1 = kato_half_power_bound(liou.number_comm, liou.number,
                               liou.vacuum_proj)
    assert np.isfinite(k1)
    p2 = p.with_(n_e=16, n_u=32)
    liou2 = assemble_liouvillian(p2)
    k2 = kato_half_power_bound(liou2.number_comm, liou2.number,
                               liou2.vacuum_proj)
    # uniformly bounded under refinement (allow mild growth)
    assert k2 < 1.5 * k1 + 1e-9


def test_c3_kato_bound_stable_under_refinement():
    """The third-commutator relative bound has a finite continuum value.

    Both ingredient norms (the thrice-commuted particle coupling and the
    thrice-differentiated glued smearing) are measured on a joint ladder
    where the cutoffs grow with resolution so the exponentially small
    coupling tails stay below what three discrete derivatives can
    amplify; the composite constant is checked finite at assembly scale.
    """
    from thermion.lattice import FieldGrid
    from thermion.operators import (assemble_particle_ops,
                                    central_difference, coupling_matrix,
                                    glue_tau_beta)
    from thermion.commutators import _iterated_matrix_ad

    ad3 = []
    for ne, cut in ((64, 14.0), (128, 16.0), (256, 18.0)):
        p = ModelParams(n_e=ne, n_u=4, n_max=0, e_max=cut, u_max=10.0)
        b = build_bases(p)
        part = assemble_particle_ops(p, b)
        g = coupling_matrix(p, b)
        ad3.append(np.linalg.norm(
            _iterated_matrix_ad(g, part.flow_gen, 3), 2))
    assert abs(ad3[2] - ad3[1]) < abs(ad3[1] - ad3[0])

    d3n = []
    for nu, cut in ((256, 14.0), (512, 16.0), (1024, 18.0)):
        grid = FieldGrid(cut, nu)
        f1 = glue_tau_beta(
            lambda u: np.asarray(u) ** 2.5 * np.exp(-np.asarray(u)),
            grid, 1.0)
        d = central_difference(grid.nodes, grid.du)
        d3n.append(np.linalg.norm(d @ (d @ (d @ f1))))
    assert abs(d3n[2] - d3n[1]) < abs(d3n[1] - d3n[0])

    p = ModelParams(n_e=12, n_u=24, n_max=1, e_max=12.0, u_max=12.0,
                    lam=0.1)
    liou = assemble_liouvillian(p)
    conj = assemble_conjugates(p, liou)
    cs = assemble_commutator_set(p, liou, conj, with_direct=False)
    k = kato_half_power_bound(cs.c3, liou.number, liou.vacuum_proj)
    assert np.isfinite(k)


def test_small_coupling_bound_zero_cases(setup):
    p, liou, conj = setup
    i1 = interaction_commutator(p, liou, conj.particle_gen, 1)
    assert estimate_small_coupling_bound(p.with_(lam=0.0), liou, i1) == 0.0
    zero = sp.csr_matrix(liou.liouvillian.shape, dtype=complex)
    assert estimate_small_coupling_bound(p, liou, zero) == 0.0


def test_small_coupling_bound_is_valid(setup):
    p, liou, conj = setup
    i1 = interaction_commutator(p, liou, conj.particle_gen, 1)
    k = estimate_small_coupling_bound(p, liou, i1)
    comp = sp.diags((0.1 * liou.number * (1 - liou.vacuum_proj)
                     + k * p.lam ** 2).astype(complex))
    for sign in (+1, -1):
        low = min_eig_hermitian((comp + sign * p.lam * i1
                                 ).tocsr() + 0.0 * comp)
        assert low >= -1e-9


def test_small_coupling_bound_grid_stability():
    # the frequency cutoff must sit beyond the glued coupling's support or
    # the hard truncation seeds a derivative spike at the edge
    ks = {}
    for nu in (32, 64):
        p = ModelParams(n_e=8, n_u=nu, n_max=1, e_max=4.0, u_max=10.0,
                        lam=0.1, a=0.2)
        liou = assemble_liouvillian(p)
        conj = assemble_conjugates(p, liou)
        i1 = interaction_commutator(p, liou, conj.particle_gen, 1)
        ks[nu] = estimate_small_coupling_bound(p, liou, i1)
    assert abs(ks[64] - ks[32]) / ks[32] < 0.1


def test_small_coupling_stability_across_scales(setup):
    p, liou, conj = setup

    def builder(pa):
        return assemble_conjugates(pa, liou)

    rep = small_coupling_stability(p, liou, builder)
    assert rep.passed, rep
