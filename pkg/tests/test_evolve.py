import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bimodal.evolve import (
    GuardError,
    TimeSeries,
    classify_parity,
    collapse_revival,
    evolve_series,
    evolve_state,
    evolve_states,
    partition,
    propagator,
    spectrum,
    variance_series,
)
from bimodal.hilbert import build_space
from bimodal.models import ModelSpec, build_model, parity_preset
from bimodal.operators import number, projector_op, schwinger, spin_op
from bimodal.states import StateVector, make_state

from test_models import CASES


def _model(tag, cut=4, picture=False):
    params, atom_dim = CASES[tag]
    return build_model(ModelSpec(tag, params, interaction_picture=picture), build_space(atom_dim, cut, cut))


def test_propagator_identity_and_unitary():
    model = _model("DegenerateOnePhoton", 6)
    n = model.space.total_dim
    assert np.allclose(propagator(model, 0.0).toarray(), np.eye(n), atol=1e-13)
    u = propagator(model, 3.7).toarray()
    assert np.max(np.abs(u.conj().T @ u - np.eye(n))) <= 1e-11


@pytest.mark.parametrize("n", [0, 1, 4, 9])
def test_jc_excited_probability(n):
    lam = 0.3
    s = build_space(2, 12, 0)
    model = build_model(ModelSpec("JC", {"omega": 1.0, "omega0": 1.0, "lam": lam}, interaction_picture=True), s)
    psi = make_state({"family": "fock", "n1": n, "atom": "+"}, s)
    t = np.linspace(0, 20, 101)
    ts = evolve_series(model, psi, t, {"pe": projector_op(s, 1, 1)})
    assert np.allclose(ts["pe"].real, np.cos(lam * math.sqrt(n + 1) * t) ** 2, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10))
def test_group_law(t1, t2):
    model = _model("Raman", 3)
    u = propagator(model, t1).toarray() @ propagator(model, t2).toarray()
    assert np.allclose(u, propagator(model, t1 + t2).toarray(), atol=1e-10)


@pytest.mark.parametrize("tag", list(CASES))
@pytest.mark.parametrize("picture", [False, True])
def test_sector_equals_dense(tag, picture, rng):
    params, atom_dim = CASES[tag]
    cut = 6 if atom_dim == 2 else 5
    space = build_space(atom_dim, cut, cut)
    assert space.total_dim <= 400
    model = build_model(ModelSpec(tag, params, interaction_picture=picture), space)
    v = rng.normal(size=space.total_dim) + 1j * rng.normal(size=space.total_dim)
    v /= np.linalg.norm(v)
    for t in (0.3, 2.9, 17.0):
        a = spectrum(model, True).apply(v, [t])[:, 0]
        b = spectrum(model, False).apply(v, [t])[:, 0]
        assert np.max(np.abs(a - b)) <= 1e-10


def test_partition_uses_constants():
    model = build_model(parity_preset(1.0), build_space(2, 6, 6))
    blocks, sectored = partition(model)
    assert sectored
    assert sum(len(b) for b in blocks) == model.space.total_dim
    assert max(len(b) for b in blocks) < model.space.total_dim // 4


def test_excitation_conserved_along_trajectory():
    s = build_space(2, 20, 20)
    model = build_model(ModelSpec("DegenerateOnePhoton", {"omega": 1.0, "omega0": 1.0, "g1": 1.0, "g2": 1.0}), s)
    psi = make_state({"family": "fock", "n1": 20, "n2": 0, "atom": "-"}, s)
    exc = number(s, 1) + number(s, 2) + spin_op(s, "Sz") + 0.5
    ts = evolve_series(model, psi, np.linspace(0, 200, 2001), {"N": exc})
    assert np.max(np.abs(ts["N"] - 20)) <= 1e-10
    assert np.all(ts.leaked_norm == 0)


def test_norm_preserved():
    model = _model("NondegTwoPhoton", 8)
    psi = make_state({"family": "coherent", "alpha1": 0.3, "alpha2": 0.2}, model.space)
    amps = evolve_states(model, psi, np.linspace(0, 50, 11))
    assert np.allclose(np.linalg.norm(amps, axis=1), 1, atol=1e-10)


def _leaky():
    s = build_space(2, 4, 4)
    model = build_model(ModelSpec("DegenerateOnePhoton", {"omega": 1.0, "omega0": 1.0, "g1": 1.0, "g2": 1.0}), s)
    # |4,2,-> feeds |4,1,+>, which couples past the n1 cutoff
    return model, make_state({"family": "fock", "n1": 4, "n2": 2, "atom": "-"}, s)


def test_guard_reports_time():
    model, psi = _leaky()
    with pytest.raises(GuardError) as err:
        evolve_series(model, psi, np.linspace(0, 1, 11), [number(model.space, 1)])
    assert err.value.time == pytest.approx(0.1)
    assert err.value.leaked > 1e-8


def test_guard_on_initial_tail():
    s = build_space(2, 6, 0)
    model = build_model(ModelSpec("JC", {"omega": 0.0, "omega0": 0.0, "lam": 1.0}), s)
    psi = StateVector(s, np.ones(s.total_dim), tail_norm=1e-3)
    with pytest.raises(GuardError):
        evolve_series(model, psi, [0.0], [number(s, 1)])


def test_leaked_norm_is_running_max():
    model, psi = _leaky()
    ts = evolve_series(model, psi, np.linspace(0, 5, 51), [number(model.space, 1)], guard=1.0)
    assert ts.leaked_norm[0] < 1e-20
    assert np.all(np.diff(ts.leaked_norm) >= 0)
    assert ts.leaked_norm[-1] > 0.1


def test_variance_of_eigenstate_is_zero():
    s = build_space(2, 4, 4)
    model = _model("JC", 4)
    psi = make_state({"family": "fock", "n1": 2, "n2": 1}, model.space)
    ts = variance_series(model, psi, [0.0, 1.0], number(model.space, 1))
    assert ts["variance"][0] == pytest.approx(0, abs=1e-14)
    with pytest.raises(ValueError):
        from bimodal.operators import annihilate
        variance_series(model, psi, [0.0], annihilate(model.space, 1))


def test_timeseries_csv_format():
    ts = TimeSeries([0.0, 0.5], {"x": np.array([1 / 3, 2.0]), "z": np.array([1j, 0.5])}, np.zeros(2))
    text = ts.to_csv(comment="hash")
    lines = text.split("\n")
    assert lines[0] == "# hash"
    assert lines[1] == "t,x,z_re,z_im,leaked_norm"
    assert lines[2].split(",")[1] == "0.33333333333333331"
    assert "\r" not in text and text.endswith("\n")
    with pytest.raises(ValueError, match="monotone"):
        TimeSeries([1.0, 0.0], {}, np.zeros(2))


def test_collapse_revival_synthetic():
    t = np.linspace(0, 400, 8001)
    env = np.exp(-((t - 0) / 40) ** 2) + 0.8 * np.exp(-((t - 300) / 40) ** 2)
    sig = 10 + 5 * env * np.cos(2 * t)
    cr = collapse_revival(t, sig, 20)
    assert 100 < cr.min_time < 200
    assert 280 < cr.revival_time < 320
    assert cr.ratio > 1.5


def test_classify_parity_synthetic():
    n = 20
    t = np.linspace(0, 60, 3001)
    plateau = n / 2 + 0.5 * np.sin(5 * t)
    drop = np.where(t < 4, n - t * n / 8, plateau)
    low = np.where(t > 28, n / 2 - 9 * np.sin((t - 28) / 4 * math.pi / 2) ** 2, drop)
    cls = classify_parity(t, low, n)
    assert cls.label == "transfer"
    high = np.where(t > 28, n / 2 + 9 * np.sin((t - 28) / 4 * math.pi / 2) ** 2, drop)
    assert classify_parity(t, high, n).label == "reabsorption"
    assert classify_parity(t, np.full_like(t, n / 2), n).label == "undecided"


@pytest.mark.parametrize("n, label", [(20, "transfer"), (21, "reabsorption")])
def test_cqed_parity_classification(n, label):
    s = build_space(2, n, n)
    model = build_model(parity_preset(1.0), s)
    psi = make_state({"family": "fock", "n1": n, "n2": 0}, s)
    ts = evolve_series(model, psi, np.linspace(0, 60, 3001), {"n1": number(s, 1)})
    cls = classify_parity(ts.times, ts["n1"].real, n)
    assert cls.label == label
    assert 2 < cls.plateau_start < 6 and cls.plateau_end > 20


def test_evolve_state_space_mismatch():
    model = _model("JC", 3)
    psi = make_state({"family": "fock"}, build_space(2, 4, 4))
    with pytest.raises(ValueError):
        evolve_series(model, psi, [0.0], [])
