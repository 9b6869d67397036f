import numpy as np
import pytest

from bimodal.evolve import evolve_states
from bimodal.hilbert import build_space
from bimodal.lindblad import (
    IntegrationError,
    LindbladParams,
    dominant_motional_state,
    integrate,
    recoil_map,
    squeezed_cat_coefficients,
    steady_state,
    vibrational_operator,
)
from bimodal.models import ModelSpec, build_model, dark_hamiltonian
from bimodal.operators import annihilate, parity
from bimodal.states import DensityMatrix, StateVector, fidelity, make_state


def _random_density(space, rng, rank=3):
    v = rng.normal(size=(space.total_dim, rank)) + 1j * rng.normal(size=(space.total_dim, rank))
    rho = v @ v.conj().T
    return DensityMatrix(space, rho / np.trace(rho))


def _zero_model(space):
    return build_model(ModelSpec("JC", {"omega": 0.0, "omega0": 0.0, "lam": 0.0}), space)


def test_params_validation():
    with pytest.raises(ValueError):
        LindbladParams(-1.0)
    with pytest.raises(ValueError):
        LindbladParams(1.0, recoil="gaussian")
    with pytest.raises(ValueError):
        LindbladParams(1.0, recoil="custom", W=lambda u, v: 2.0 + 0 * u)
    p = LindbladParams(1.0, recoil="custom", W=lambda u, v: 3 * u * u + 0 * v)
    assert p.weight_norm() == pytest.approx(1, abs=1e-6)


def test_recoil_none_is_identity(rng):
    s = build_space(2, 4, 4)
    rho = _random_density(s, rng)
    out = recoil_map(rho, LindbladParams(1.0))
    assert np.array_equal(out.matrix, rho.matrix)


def test_recoil_preserves_trace(rng):
    s = build_space(2, 10, 10)
    rho = _random_density(s, rng)
    out = recoil_map(rho, LindbladParams(1.0, recoil="uniform", k_eta=0.1))
    assert abs(out.trace() - rho.trace()) <= 1e-10


def test_recoil_quadratic_in_k(rng):
    s = build_space(2, 5, 5)
    rho = _random_density(s, rng)
    dev = []
    for k in (0.02, 0.04):
        out = recoil_map(rho, LindbladParams(1.0, recoil="uniform", k_eta=k))
        dev.append(np.max(np.abs(out.matrix - rho.matrix)))
    assert dev[1] / dev[0] == pytest.approx(4, rel=0.02)


def test_recoil_order_converged(rng):
    s = build_space(2, 5, 5)
    rho = _random_density(s, rng)
    p = LindbladParams(1.0, recoil="uniform", k_eta=0.3)
    assert np.max(np.abs(recoil_map(rho, p, 8).matrix - recoil_map(rho, p, 16).matrix)) < 1e-8


def test_free_decay():
    s = build_space(2, 3, 3)
    rho0 = make_state({"family": "fock", "atom": "+"}, s).density()
    traj = integrate(_zero_model(s), LindbladParams(0.7), rho0, 10.0, 0.5)
    assert np.max(np.abs(traj.excited_population() - np.exp(-0.7 * traj.times))) <= 1e-8


def test_zero_gamma_matches_unitary():
    s = build_space(2, 6, 6)
    model = build_model(ModelSpec("DegenerateOnePhoton", {"omega": 1.0, "omega0": 1.2, "g1": 0.6, "g2": 0.9}), s)
    psi = make_state({"family": "fock", "n1": 3, "n2": 1, "atom": "+"}, s)
    traj = integrate(model, LindbladParams(0.0), psi.density(), 8.0, 0.5)
    amps = evolve_states(model, psi, traj.times)
    for a, rho in zip(amps, traj.states):
        assert np.max(np.abs(np.outer(a, a.conj()) - rho.matrix)) <= 1e-8


def test_trace_preserved_long_run():
    s = build_space(2, 12, 0)
    model = build_model(ModelSpec("JC", {"omega": 1.0, "omega0": 1.0, "lam": 0.5}), s)
    rho0 = make_state({"family": "coherent", "alpha1": 1.0, "atom": "+"}, s).density()
    traj = integrate(model, LindbladParams(1.0), rho0, 20.0, 1.0)
    assert traj.diagnostics["trace_drift"] <= 1e-8
    assert traj.diagnostics["min_eigenvalue"] >= -1e-8


def test_two_level_atom_required():
    s = build_space(3, 2, 2)
    model = build_model(ModelSpec("Lambda3", {"g1": 0.5, "g2": 0.8}), s)
    with pytest.raises(ValueError):
        integrate(model, LindbladParams(1.0), make_state({"family": "fock"}, s).density(), 1.0, 0.1)


def test_step_underflow_aborts(monkeypatch):
    import types

    import bimodal.lindblad as lb

    def failing(*args, **kwargs):
        return types.SimpleNamespace(status=-1, t=np.array([0.0, 0.25]),
                                     message="Required step size is less than spacing between numbers.")

    monkeypatch.setattr(lb, "solve_ivp", failing)
    s = build_space(2, 2, 2)
    rho0 = make_state({"family": "fock", "atom": "+"}, s).density()
    with pytest.raises(IntegrationError, match="t=0.25"):
        integrate(_zero_model(s), LindbladParams(1.0), rho0, 1.0, 0.5)


def test_trajectory_csv():
    s = build_space(2, 2, 2)
    rho0 = make_state({"family": "fock", "atom": "+"}, s).density()
    traj = integrate(_zero_model(s), LindbladParams(1.0), rho0, 1.0, 0.5)
    text = traj.to_csv(1.0, target=make_state({"family": "fock"}, s), comment="x")
    lines = text.strip().split("\n")
    assert lines[0] == "# x"
    assert lines[1] == "t,trace,fluorescence_rate,fidelity"
    assert len(lines) == 5


@pytest.fixture(scope="module")
def pair_dark():
    s = build_space(2, 15, 15)
    model = dark_hamiltonian(vibrational_operator("pair", {}), 1.0, 1.0, s)
    rho0 = make_state({"family": "fock", "n1": 1, "n2": 0}, s).density()
    return s, model, steady_state(model, LindbladParams(1.0), rho0)


def test_dark_pair_coherent(pair_dark):
    s, _, ss = pair_dark
    target = make_state({"family": "pair_coherent", "xi": 1.0, "q": 1}, s)
    assert ss.converged and ss.dark
    assert fidelity(target, ss.state) >= 0.999
    assert ss.fluorescence_rate < 1e-6
    assert ss.commutator <= 1e-8


def test_dark_eigen_relation(pair_dark):
    s, _, ss = pair_dark
    weight, vec = dominant_motional_state(ss.state)
    assert weight == pytest.approx(1, abs=1e-8)
    a = (annihilate(s, 1) @ annihilate(s, 2)).matrix.toarray()[: s.mode_dim, : s.mode_dim]
    assert np.linalg.norm(a @ vec - vec) <= 1e-6


def test_kernel_state_is_stationary():
    s = build_space(2, 6, 6)
    model = dark_hamiltonian(vibrational_operator("pair", {}), 0.0, 1.0, s)
    rho0 = make_state({"family": "fock", "n1": 2, "n2": 0}, s).density()
    ss = steady_state(model, LindbladParams(1.0), rho0)
    assert np.max(np.abs(ss.state.matrix - rho0.matrix)) < 1e-12
    assert ss.dark


@pytest.mark.parametrize("n1, n2, phi", [(1, 0, 0.0), (2, 1, np.pi)])
def test_pair_cat_parity(n1, n2, phi):
    s = build_space(2, 18, 16)
    model = dark_hamiltonian(vibrational_operator("pair_squared", {}), 1.0, 1.0, s)
    rho0 = make_state({"family": "fock", "n1": n1, "n2": n2}, s).density()
    ss = steady_state(model, LindbladParams(1.0), rho0)
    target = make_state({"family": "pair_cat", "xi": 1.0, "q": 1, "phi": phi}, s)
    assert ss.dark
    assert fidelity(target, ss.state) >= 0.999


@pytest.mark.parametrize("n, sign", [(0, 1), (1, -1)])
def test_squeezed_cat_parity(n, sign):
    alpha, xi = 1.0, 0.2
    g1, g2, g0, zeta = squeezed_cat_coefficients(alpha, xi)
    vib = vibrational_operator("quadratic", {"g1": abs(g1), "phi1": -np.angle(g1), "g2": abs(g2),
                                             "phi2": -np.angle(g2), "g0": abs(g0), "phi0": -np.angle(g0)})
    s = build_space(2, 30, 0)
    model = dark_hamiltonian(vib, zeta, 1.0, s)
    ss = steady_state(model, LindbladParams(1.0), make_state({"family": "fock", "n1": n}, s).density())
    p = np.real(np.trace(parity(s, 1).matrix.toarray() @ ss.state.matrix))
    assert p == pytest.approx(sign, abs=1e-3)
    a = make_state({"family": "squeezed", "alpha": alpha, "xi": xi}, s, tail_tol=1e-6).amplitudes
    b = make_state({"family": "squeezed", "alpha": -alpha, "xi": xi}, s, tail_tol=1e-6).amplitudes
    assert fidelity(StateVector(s, a + sign * b), ss.state) >= 0.999


def test_squeezed_cat_eigenvalue():
    alpha, xi = 0.7, 0.15 + 0.1j
    g1, g2, g0, zeta = squeezed_cat_coefficients(alpha, xi)
    s = build_space(2, 40, 0)
    vib = vibrational_operator("quadratic", {"g1": abs(g1), "phi1": -np.angle(g1), "g2": abs(g2),
                                             "phi2": -np.angle(g2), "g0": abs(g0), "phi0": -np.angle(g0)})(s)
    psi = make_state({"family": "squeezed", "alpha": alpha, "xi": xi}, s)
    out = vib.matrix @ psi.amplitudes
    assert np.linalg.norm((out - zeta * psi.amplitudes)[: 30]) < 1e-8


def test_vibrational_operator_unknown():
    with pytest.raises(ValueError):
        vibrational_operator("cubic", {})
