import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st
from scipy import special

from bimodal.hilbert import basis_index, build_space
from bimodal.operators import (
    Operator,
    angular_momentum_z,
    annihilate,
    circular_ops,
    commutator,
    create,
    f_k_operator,
    f_k_values,
    kick_operator,
    laguerre,
    mode_op,
    mode_rotation,
    normal_ordered_kick_matrix,
    number,
    parity,
    projector_op,
    quadrature_ops,
    schwinger,
    spin_op,
    unitary_kick,
    vibronic_rabi,
)
from bimodal.states import make_state

from conftest import basis_vec


def test_annihilate_matrix_elements():
    s = build_space(1, 5, 0)
    out = annihilate(s, 1) @ basis_vec(s, 0, 3, 0)
    assert out[basis_index(s, 0, 2, 0)] == pytest.approx(math.sqrt(3))
    assert np.count_nonzero(out) == 1
    assert not np.any(annihilate(s, 1) @ basis_vec(s, 0, 0, 0))


def test_create_on_cutoff_is_zero():
    s = build_space(2, 3, 2)
    assert not np.any(create(s, 1) @ basis_vec(s, 1, 3, 1))
    assert not np.any(create(s, 2) @ basis_vec(s, 0, 1, 2))


def test_mode_op_kinds():
    s = build_space(1, 3, 3)
    assert np.allclose(mode_op(s, 2, "number").toarray(), (create(s, 2) @ annihilate(s, 2)).toarray())
    with pytest.raises(ValueError):
        mode_op(s, 1, "squeeze")


def test_canonical_commutator_below_cutoff():
    s = build_space(2, 6, 6)
    c = commutator(annihilate(s, 1), create(s, 1)).toarray()
    lab = s.labels
    inside = lab[:, 1] < s.cutoff1
    assert np.allclose(c[np.ix_(inside, inside)], np.eye(inside.sum()), atol=1e-14)


def test_pseudospin_relations():
    s = build_space(2, 1, 1)
    plus, minus = basis_vec(s, 1, 0, 0), basis_vec(s, 0, 0, 0)
    sz = spin_op(s, "Sz")
    assert np.allclose(sz @ plus, 0.5 * plus)
    assert np.allclose(sz @ minus, -0.5 * minus)
    assert np.allclose(spin_op(s, "S+") @ minus, plus)
    assert not np.any(spin_op(s, "S+") @ plus)
    assert np.allclose(spin_op(s, "S-") @ plus, minus)
    assert np.allclose(commutator(spin_op(s, "S+"), spin_op(s, "S-")).toarray(), 2 * sz.toarray())


def test_pseudospin_needs_two_levels():
    with pytest.raises(ValueError):
        spin_op(build_space(3, 1, 1), "Sz")


def test_projector_op():
    s = build_space(3, 1, 2)
    p = projector_op(s, 0, 1)
    assert np.allclose(p @ basis_vec(s, 1, 1, 2), basis_vec(s, 0, 1, 2))
    assert not np.any(p @ basis_vec(s, 0, 1, 2))
    assert np.allclose(p.dag.toarray(), projector_op(s, 1, 0).toarray())
    with pytest.raises(IndexError):
        projector_op(s, 0, 3)


def test_operator_arithmetic():
    s = build_space(2, 2, 2)
    a = annihilate(s, 1)
    assert (a + a).max_abs() == pytest.approx(2 * a.max_abs())
    assert (a - a).max_abs() == 0
    assert np.allclose((a ** 2).toarray(), (a @ a).toarray())
    assert (a ** 0).is_hermitian()
    assert not a.is_hermitian()
    ident = Operator.identity(s)
    assert np.allclose((number(s, 1) + 1).toarray(), (number(s, 1) + ident).toarray())
    with pytest.raises(ValueError):
        a + annihilate(build_space(2, 3, 2), 1)


def test_from_entries_sums_duplicates():
    s = build_space(1, 1, 0)
    op = Operator.from_entries(s, [(0, 1, 1.0), (0, 1, 2.0)])
    assert op.entries == [(0, 1, 3.0 + 0j)]
    with pytest.raises(IndexError):
        Operator.from_entries(s, [(0, 2, 1.0)])


def test_schwinger_components():
    s = build_space(1, 3, 3)
    j1, j3 = schwinger(s, 1), schwinger(s, 3)
    v20 = basis_vec(s, 0, 2, 0)
    assert np.allclose(j3 @ v20, v20)
    assert np.allclose(j1 @ basis_vec(s, 0, 1, 0), 0.5 * basis_vec(s, 0, 0, 1))
    # su(2) algebra inside a fixed-N block, away from the cutoff
    j2 = schwinger(s, 2)
    c = commutator(j1, j2) - 1j * j3
    lab = s.labels
    block = (lab[:, 1] + lab[:, 2]) <= 3
    assert np.max(np.abs(c.toarray()[np.ix_(block, block)])) < 1e-14


def test_lz_on_circular_state():
    N = 4
    s = build_space(1, N, N)
    right = make_state({"family": "circular_fock", "n_r": N, "n_l": 0}, s)
    lz = angular_momentum_z(s)
    assert np.allclose(lz @ right.amplitudes, N * right.amplitudes)
    a_r, a_l = circular_ops(s)
    nr = (a_r.dag @ a_r).toarray()
    assert np.vdot(right.amplitudes, nr @ right.amplitudes).real == pytest.approx(N)


def test_parity_operator():
    s = build_space(1, 3, 0)
    assert np.allclose(parity(s, 1).diagonal(), [1, -1, 1, -1])


@pytest.mark.parametrize("n, k", [(n, k) for n in range(0, 12) for k in (0, 1, 3)])
def test_laguerre_matches_scipy(n, k):
    for x in (0.01, 0.5, 2.0, 7.3):
        assert laguerre(n, k, x) == pytest.approx(special.eval_genlaguerre(n, k, x), rel=1e-11, abs=1e-12)


def test_f_k_ground_value():
    for eta in (0.1, 0.7):
        assert f_k_values(0, 1, eta)[0] == pytest.approx(math.exp(-eta ** 2 / 2) / 1)


def test_f_k_series_oracle():
    eta, k = 0.6, 2
    x = eta * eta
    vals = f_k_values(10, k, eta)
    for n, v in enumerate(vals):
        series = sum((-x) ** l / (math.factorial(l + k) * math.factorial(l)) * math.perm(n, l) for l in range(n + 1))
        assert v == pytest.approx(math.exp(-x / 2) * series, rel=1e-12)


def test_f_k_even_k_real():
    s = build_space(1, 10, 0)
    assert np.all(np.abs(f_k_operator(s, 1, 2, 0.8).diagonal().imag) == 0)


def test_f1_coherent_bessel():
    eta, alpha = 0.3, 2.0
    s = build_space(1, 60, 0)
    psi = make_state({"family": "coherent", "alpha1": alpha}, s).amplitudes
    val = np.vdot(psi, f_k_operator(s, 1, 1, eta) @ psi).real
    expected = special.jv(1, 2 * eta * alpha) / (eta * alpha) * math.exp(-eta ** 2 / 2)
    assert val == pytest.approx(expected, abs=1e-12)


def test_vibronic_rabi_examples():
    assert vibronic_rabi(0, 1, 0.2, 1.0) == pytest.approx(0.2j * math.exp(-0.02), abs=1e-15)
    assert abs(vibronic_rabi(1, 1, math.sqrt(2), 1.0)) < 1e-12
    for n in range(5):
        assert vibronic_rabi(n, 1, 1e-4, 1.0) == pytest.approx(1e-4j * math.sqrt(n + 1), rel=1e-6)


def _series_kick(dim, eta, terms=40):
    """Independent normal-ordered sum, fixed 40 terms per index."""
    big = dim + terms
    a = np.diag(np.sqrt(np.arange(1, big)), 1)
    ad = a.T
    out = np.zeros((big, big), dtype=complex)
    adm = np.eye(big)
    for m in range(terms):
        al = np.eye(big)
        for l in range(terms):
            out += (1j * eta) ** (m + l) / (math.factorial(m) * math.factorial(l)) * (adm @ al)
            al = al @ a
        adm = adm @ ad
    return math.exp(-eta * eta / 2) * out[:dim, :dim]


@pytest.mark.parametrize("eta", [0.1, 0.5, 1.0])
def test_vibronic_rabi_against_series(eta):
    dim = 24
    kick = _series_kick(dim, eta)
    for k in range(4):
        for n in range(21):
            if n + k >= dim:
                continue
            brute = kick[n, n + k]
            assert vibronic_rabi(n, k, eta, 1.0) == pytest.approx(brute, abs=1e-10)


def test_vibronic_rabi_equals_assembled_operator():
    eta, k = 0.5, 2
    s = build_space(1, 15, 0)
    a = annihilate(s, 1)
    op = f_k_operator(s, 1, k, eta) @ ((1j * eta) ** k * a ** k)
    m = op.toarray()
    for n in range(0, s.cutoff1 - k + 1):
        assert m[n, n + k] == pytest.approx(vibronic_rabi(n, k, eta, 1.0), abs=1e-12)


def test_kick_operator_limits():
    s = build_space(1, 8, 0)
    assert np.allclose(kick_operator(s, 1, 0.0).toarray(), np.eye(9))
    assert kick_operator(s, 1, 0.4).toarray()[0, 0] == pytest.approx(math.exp(-0.08))


def test_kick_operator_interior_matches_expm():
    eta, dim = 0.7, 12
    big = np.diag(np.sqrt(np.arange(1, 80)), 1)
    exact = sla.expm(1j * eta * (big + big.T))[:dim, :dim]
    assert np.allclose(normal_ordered_kick_matrix(dim, eta), exact, atol=1e-12)


def test_unitary_kick_is_unitary():
    s = build_space(2, 6, 6)
    u = unitary_kick(s, 2, 0.3).toarray()
    assert np.allclose(u.conj().T @ u, np.eye(s.total_dim), atol=1e-12)


def test_mode_rotation_examples():
    s = build_space(1, 3, 3)
    assert np.allclose(mode_rotation(s, 0.0).toarray(), np.eye(s.total_dim))
    out = mode_rotation(s, math.pi / 4) @ basis_vec(s, 0, 1, 0)
    expected = (basis_vec(s, 0, 1, 0) + basis_vec(s, 0, 0, 1)) / math.sqrt(2)
    assert abs(np.vdot(expected, out)) == pytest.approx(1, abs=1e-12)


def test_mode_rotation_unitary_at_cutoff_25():
    s = build_space(1, 25, 25)
    u = mode_rotation(s, 0.37).matrix
    err = abs(u.conj().T @ u - np.eye(s.total_dim)).max()
    assert err <= 1e-12


def test_mode_rotation_transforms_ladder():
    theta = 0.4
    s = build_space(1, 4, 4)
    u = mode_rotation(s, theta)
    ax, ay = annihilate(s, 1), annihilate(s, 2)
    lhs = (u @ ax @ u.dag).toarray()
    rhs = (math.cos(theta) * ax + math.sin(theta) * ay).toarray()
    lab = s.labels
    block = (lab[:, 1] + lab[:, 2]) <= 3
    assert np.allclose(lhs[np.ix_(block, block)], rhs[np.ix_(block, block)], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_mode_rotation_group_law(t1, t2):
    s = build_space(1, 4, 4)
    lhs = (mode_rotation(s, t1) @ mode_rotation(s, t2)).toarray()
    assert np.allclose(lhs, mode_rotation(s, t1 + t2).toarray(), atol=1e-10)


def test_quadrature_commutator_and_vacuum():
    s = build_space(1, 8, 8)
    d1, d2 = quadrature_ops(s, 0.3, -1.1)
    vac = basis_vec(s, 0, 0, 0)
    comm = commutator(d1, d2)
    assert np.vdot(vac, comm @ vac) == pytest.approx(0.5j, abs=1e-14)
    for d in (d1, d2):
        assert d.is_hermitian()
        m = np.vdot(vac, d @ vac).real
        var = np.vdot(vac, d @ (d @ vac)).real - m ** 2
        assert var == pytest.approx(0.25, abs=1e-14)


def test_quadrature_coherent_variance():
    s = build_space(1, 40, 40)
    psi = make_state({"family": "coherent", "alpha1": 1.2 + 0.5j, "alpha2": -0.7j}, s).amplitudes
    for d in quadrature_ops(s, 0.2, 0.9):
        m = np.vdot(psi, d @ psi).real
        var = np.vdot(psi, d @ (d @ psi)).real - m ** 2
        assert var == pytest.approx(0.25, abs=1e-10)
