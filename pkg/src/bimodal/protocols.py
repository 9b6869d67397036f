"""Conditional-measurement protocols: evolve, measure the atom, keep the selected branch."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .evolve import GUARD_DEFAULT, GuardError, TimeSeries, evolve_series, evolve_state, evolve_states
from .hilbert import HilbertSpace, build_space
from .models import BuiltModel, ModelSpec, bimodal_cat_model, build_model, ion_parity_model, parity_preset, qnd_model
from .operators import Operator, projector_op
from .states import (
    MotionalMixture,
    StateVector,
    angular_profile,
    coherent_amplitudes,
    fidelity,
    make_state,
    product_state,
    su2_sector,
)

BASES = {
    "z": np.eye(2, dtype=complex),
    "x": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
}


def atom_basis(basis) -> np.ndarray:
    """Columns are the basis vectors; ``"z"`` = {|->, |+>}, ``"x"`` = (|-> +- |+>)/sqrt2."""
    b = BASES[basis] if isinstance(basis, str) else np.asarray(basis, dtype=complex)
    if np.max(np.abs(b.conj().T @ b - np.eye(b.shape[1]))) > 1e-10:
        raise ValueError("atomic measurement basis is not orthonormal")
    return b


def _basis_label(basis) -> str:
    return basis if isinstance(basis, str) else "custom"


@dataclass
class MeasurementRecord:
    basis: str
    outcome: int
    probability: float
    post_state: StateVector
    basis_vectors: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {"basis": self.basis, "outcome": self.outcome, "probability": self.probability}


def _projected(state: StateVector, vec: np.ndarray) -> np.ndarray:
    c = state.modes()
    amp = np.tensordot(vec.conj(), c, axes=(0, 0))  # mode amplitudes of <b|psi>
    return np.kron(vec, amp.ravel())


def measure_atom(state: StateVector, basis="z", outcome: int = 0) -> MeasurementRecord:
    """Project the atom onto basis vector ``outcome``; the atom stays in that vector."""
    b = atom_basis(basis)
    if b.shape[0] != state.space.atom_dim:
        raise ValueError("basis dimension does not match the atom")
    proj = _projected(state, b[:, outcome])
    prob = float(np.real(np.vdot(proj, proj)))
    if prob <= 1e-14:
        raise ValueError(f"outcome {outcome} has zero probability; cannot condition on it")
    return MeasurementRecord(_basis_label(basis), outcome, prob, StateVector(state.space, proj), b)


def outcome_probabilities(state: StateVector, basis="z") -> np.ndarray:
    b = atom_basis(basis)
    return np.array([np.real(np.vdot(p, p)) for p in (_projected(state, b[:, k]) for k in range(b.shape[1]))])


# ---------------------------------------------------------------------------


@dataclass
class ProtocolStep:
    time: float
    model_tag: str
    record: MeasurementRecord
    prepare_atom: np.ndarray | None = None  # fresh atom injected before the evolution
    model: BuiltModel | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {"time": self.time, "model": self.model_tag, **self.record.to_dict()}
        if self.prepare_atom is not None:
            out["prepare_atom"] = [[float(z.real), float(z.imag)] for z in self.prepare_atom]
        return out


@dataclass
class ProtocolTrace:
    name: str
    initial_state: StateVector
    steps: list[ProtocolStep]
    final_state: StateVector
    extras: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict, repr=False)  # in-memory only, not serialized

    @property
    def success_probability(self) -> float:
        return float(np.prod([s.record.probability for s in self.steps])) if self.steps else 1.0

    def to_dict(self) -> dict:
        return {
            "protocol": self.name,
            "success_probability": self.success_probability,
            "steps": [s.to_dict() for s in self.steps],
            "final_state_space": self.final_state.space.header(),
            **{k: _plain(v) for k, v in self.extras.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag}
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def _with_atom(state: StateVector, atom_vec: np.ndarray) -> StateVector:
    """Replace the atom by a fresh one; the modes keep their (product) state."""
    u, sv, vh = np.linalg.svd(state.amplitudes.reshape(state.space.atom_dim, -1), full_matrices=False)
    if len(sv) > 1 and sv[1] > 1e-10:
        raise ValueError("atom is entangled with the modes; cannot inject a fresh atom")
    return StateVector(state.space, np.kron(atom_vec, sv[0] * vh[0]))


def _run_step(state, model, t, basis, outcome, prepare=None):
    if prepare is not None:
        state = _with_atom(state, prepare)
    evolved = evolve_state(model, state, t) if t != 0 else state
    rec = measure_atom(evolved, basis, outcome)
    return ProtocolStep(float(t), model.tag, rec, prepare, model), rec.post_state


def replay(trace: ProtocolTrace) -> StateVector:
    """Re-apply every recorded evolution and projection to the initial state."""
    state = trace.initial_state
    for step in trace.steps:
        _, state = _run_step(state, step.model, step.time, step.record.basis_vectors, step.record.outcome,
                             step.prepare_atom)
    return state


# ---------------------------------------------------------------------------
# pair-Fock ladder in a two-photon cavity


def pair_fock_ladder(space: HilbertSpace, n_target: int, timing="exact_pi_pulse", lam: float = 1.0,
                     beta1: float = 0.0, beta2: float = 0.0) -> ProtocolTrace:
    """Grow |j, j> one pair at a time: inject |+>, evolve, detect |->.

    ``timing`` is ``"exact_pi_pulse"`` or a fixed interaction time.  The step
    from |k, k> closes on span{|+,k,k>, |-,k+1,k+1>} with Rabi frequency
    lam (k + 1) for resonant beta1 = beta2 = 0.
    """
    if n_target > min(space.cutoff1, space.cutoff2):
        raise ValueError(f"n_target={n_target} exceeds the cutoffs ({space.cutoff1}, {space.cutoff2})")
    spec = ModelSpec("NondegTwoPhoton", {"omega0": 2.0, "omega1": 1.0, "omega2": 1.0, "lam": lam,
                                         "beta1": beta1, "beta2": beta2}, interaction_picture=True)
    model = build_model(spec, space)
    state = make_state({"family": "fock", "n1": 0, "n2": 0, "atom": 0}, space)
    initial = state
    steps = []
    excited = np.array([0, 1], dtype=complex)
    for k in range(n_target):
        rate = abs(lam) * (k + 1)
        t = math.pi / (2 * rate) if timing == "exact_pi_pulse" else float(timing)
        step, state = _run_step(state, model, t, "z", 0, prepare=excited)
        steps.append(step)
    target = make_state({"family": "fock", "n1": n_target, "n2": n_target}, space)
    return ProtocolTrace("pair_fock_ladder", initial, steps, state,
                         {"target_fidelity": fidelity(state, target), "n_target": n_target})


def ladder_step_probability(lam: float, k: int, t: float) -> float:
    """sin^2(lam (k+1) t): two-level closed form for one ladder step."""
    return math.sin(abs(lam) * (k + 1) * t) ** 2


# ---------------------------------------------------------------------------
# QND projection onto a pair-coherent ladder


def greedy_schedule(detuning: float, weights: dict[int, float], n_measurements: int, l_max: int = 400) -> list[int]:
    """Integers l_k that filter the off-target ladders fastest.

    A ladder offset dq from the target keeps the factor cos^2(pi l dq detuning)
    per measurement; each l is chosen to minimize the surviving off-target weight.
    """
    surv = {dq: w for dq, w in weights.items() if dq != 0}
    ls = np.arange(1, l_max + 1)
    out = []
    for _ in range(n_measurements):
        if not surv:
            out.append(1)
            continue
        dqs = np.array(list(surv))
        w = np.array([surv[d] for d in dqs])
        fac = np.cos(np.pi * np.outer(ls, dqs) * detuning) ** 2
        best = int(ls[np.argmin(fac @ w)])
        out.append(best)
        surv = {d: surv[d] * math.cos(math.pi * best * d * detuning) ** 2 for d in surv}
    return out


def qnd_schedule(omega_lx, omega_ly, chi, q_target, n_measurements, schedule="minimal", initial=None):
    """Measurement times (t_1, ..., t_n) for the QND filter.

    ``schedule`` is ``"minimal"`` (l_1 = 0, l_k = 1), ``"greedy"`` (l_1 = 0 and
    l_k from :func:`greedy_schedule` using the initial ladder weights), or an
    explicit list ``[l_1, l_2, ...]``.
    """
    rabi = abs(omega_lx - omega_ly - chi * q_target)
    if rabi == 0:
        raise ValueError("target ladder is dark: it never fluoresces, no filtering possible")
    if isinstance(schedule, str):
        if schedule == "minimal":
            ls = [0] + [1] * (n_measurements - 1)
        elif schedule == "greedy":
            detuning = chi / rabi
            ls = [0] + greedy_schedule(detuning, initial or {}, n_measurements - 1)
        else:
            raise ValueError(f"unknown schedule {schedule!r}")
    else:
        ls = [int(x) for x in schedule][:n_measurements]
        if len(ls) < n_measurements:
            raise ValueError("explicit schedule shorter than n_measurements")
    times = [(2 * ls[0] + 1) * math.pi / (2 * rabi)] + [l * math.pi / rabi for l in ls[1:]]
    return ls, times


def qnd_projection(alpha: complex, beta: complex, q_target: int, n_measurements: int,
                   omega_lx: float = 2.0, omega_ly: float = 1.0, chi: float = 0.0049,
                   space: HilbertSpace | None = None, schedule="minimal") -> ProtocolTrace:
    """Null-fluorescence filtering of |alpha, beta, -> onto the Q = q_target ladder.

    Each null-fluorescence detection is a projection on |+>.  The final
    motional state is compared with the pair coherent state |alpha beta; q>.
    """
    if space is None:
        cut = int(max(abs(alpha) ** 2, abs(beta) ** 2) + 6 * max(abs(alpha), abs(beta)) + 14)
        space = build_space(2, cut, cut)
    model = qnd_model(omega_lx, omega_ly, chi, space)
    psi0 = make_state({"family": "coherent", "alpha1": alpha, "alpha2": beta}, space)
    lab = space.labels
    q_of = lab[:, 1] - lab[:, 2]
    weights = {}
    pop = np.abs(psi0.amplitudes) ** 2
    for q in np.unique(q_of):
        weights[int(q - q_target)] = float(pop[q_of == q].sum())
    if weights.get(0, 0.0) <= 1e-14:
        raise ValueError(f"initial state has no weight on the Q={q_target} ladder")
    ls, times = qnd_schedule(omega_lx, omega_ly, chi, q_target, n_measurements, schedule, weights)
    target = make_state({"family": "pair_coherent", "xi": alpha * beta, "q": q_target, "atom": 1}, space)
    state = psi0
    steps, fids = [], []
    for t in times:
        step, state = _run_step(state, model, t, "z", 1)
        steps.append(step)
        fids.append(fidelity(state, target))
    ladder_weight = weights[0]
    return ProtocolTrace("qnd_projection", psi0, steps, state, {
        "schedule_l": ls,
        "times": times,
        "fidelity_history": fids,
        "final_fidelity": fids[-1] if fids else fidelity(psi0, target),
        "target_ladder_weight": ladder_weight,
        "reproduces_0172": bool(abs(np.prod([s.record.probability for s in steps]) - 0.172) < 0.0005),
    })


def pair_coherent_ladder_weight(alpha: complex, beta: complex, q: int) -> float:
    """Closed form P(Q = q) = e^{-(a+b)} (a/b)^{q/2} I_q(2 sqrt(ab)), a = |alpha|^2, b = |beta|^2."""
    from scipy.special import ive

    a, b = abs(alpha) ** 2, abs(beta) ** 2
    z = 2 * math.sqrt(a * b)
    return float(math.exp(-(a + b) + z) * (a / b) ** (q / 2) * ive(abs(q), z))


# ---------------------------------------------------------------------------
# SU(2) cats from the ion parity effect


def su2_cat_target(space: HilbertSpace, n_total: int) -> StateVector:
    """Even N: (|1,j> + (-1)^{N/2}|-1,j>)/sqrt2; odd N: (|i,j> - i(-1)^{(N+1)/2}|-i,j>)/sqrt2."""
    c1, c2 = space.cutoff1, space.cutoff2
    if n_total % 2 == 0:
        vec = su2_sector(1, n_total) + (-1) ** (n_total // 2) * su2_sector(-1, n_total)
    else:
        vec = su2_sector(1j, n_total) - 1j * (-1) ** ((n_total + 1) // 2) * su2_sector(-1j, n_total)
    modes = np.zeros((c1 + 1, c2 + 1), dtype=complex)
    for k, amp in enumerate(vec):
        modes[k, n_total - k] = amp
    return product_state(space, modes, atom=0)


def su2_nonclassicality(state: StateVector, n_total: int) -> float:
    """1 - max over SU(2) coherent states of |<tau, j|psi>|^2 within the N sector.

    Zero when the state is itself an SU(2) coherent state (always so for N = 1).
    """
    modes = state.modes()[0]
    vec = np.array([modes[k, n_total - k] for k in range(n_total + 1)])
    vec = vec / np.linalg.norm(vec)

    def neg_q(p):
        tau = math.tan(p[0]) * np.exp(1j * p[1])
        return -abs(np.vdot(su2_sector(tau, n_total), vec)) ** 2

    grid = [(b, ph) for b in np.linspace(0.0, math.pi / 2 - 1e-6, 13) for ph in np.linspace(0, 2 * math.pi, 24, endpoint=False)]
    start = min(grid, key=neg_q)
    best = optimize.minimize(neg_q, start, method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-12})
    return float(1 + min(best.fun, neg_q(start)))


def parity_cat(n_total: int, omega_prime: float = 1.0, space: HilbertSpace | None = None,
               window: float = 0.05, n_search: int = 401) -> ProtocolTrace:
    """Evolve rotated Fock |N along 45 deg, -> to t_N/2 and detect the ground state.

    Even N is measured at t_N/2 = pi N / (2 Omega'); for odd N the time is
    searched within +-``window`` of t_N/2 for the best target fidelity.
    """
    if space is None:
        space = build_space(2, n_total, n_total)
    if n_total > min(space.cutoff1, space.cutoff2):
        raise ValueError(f"N={n_total} exceeds the cutoffs")
    model = ion_parity_model(space, omega_prime)
    psi0 = make_state({"family": "rotated_fock", "N": n_total, "theta": math.pi / 4}, space)
    t_half = math.pi * n_total / (2 * omega_prime)
    target = su2_cat_target(space, n_total)
    if n_total % 2 == 0:
        t = t_half
    else:
        ts = np.linspace((1 - window) * t_half, (1 + window) * t_half, n_search)
        amps = evolve_states(model, psi0, ts)
        md = space.mode_dim
        ground = amps[:, :md]
        overlaps = np.abs(ground.conj() @ target.amplitudes[:md]) ** 2 / np.sum(np.abs(ground) ** 2, axis=1)
        t = float(ts[np.argmax(overlaps)])
    step, post = _run_step(psi0, model, t, "z", 0)
    return ProtocolTrace("parity_cat", psi0, [step], post, {
        "N": n_total,
        "time": t,
        "t_half": t_half,
        "target_fidelity": fidelity(post, target),
        "nonclassicality": su2_nonclassicality(post, n_total),
    })


# ---------------------------------------------------------------------------
# bimodal cat readout


def readout_formula(alpha2: float, beta2: float, phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    return 0.5 * (1 + np.exp(-(alpha2 + beta2) * (1 - np.cos(phi))) * np.cos((alpha2 - beta2) * np.sin(phi)))


def bimodal_cat_readout(alpha: complex, beta: complex, chi: float, times, space: HilbertSpace | None = None,
                        guard: float = GUARD_DEFAULT) -> TimeSeries:
    """Ground-state probability under -chi Q (s+ + s-) from |alpha, beta, ->, with the closed form."""
    if space is None:
        cut = int(max(abs(alpha) ** 2, abs(beta) ** 2) + 6 * max(abs(alpha), abs(beta)) + 14)
        space = build_space(2, cut, cut)
    model = bimodal_cat_model(chi, space)
    psi0 = make_state({"family": "coherent", "alpha1": alpha, "alpha2": beta}, space)
    ts = evolve_series(model, psi0, times, {"P_minus_sim": projector_op(space, 0, 0)}, guard)
    phi = 2 * chi * ts.times
    sim = ts.values["P_minus_sim"].real
    formula = readout_formula(abs(alpha) ** 2, abs(beta) ** 2, phi)
    values = {"phi": phi, "P_minus_sim": sim, "P_minus_formula": formula, "abs_diff": np.abs(sim - formula)}
    return TimeSeries(ts.times, values, ts.leaked_norm, {"model": model.tag})


# ---------------------------------------------------------------------------
# cavity cat from the two-photon parity effect


def _branch_stats(modes: np.ndarray):
    p = np.abs(modes) ** 2
    norm = p.sum()
    n1 = np.arange(modes.shape[0]) @ p.sum(axis=1) / norm
    n2 = np.arange(modes.shape[1]) @ p.sum(axis=0) / norm
    return n1, n2


def coherent_parity_cat(alpha: complex, lam: float = 1.0, space: HilbertSpace | None = None,
                        outcome: int = 0, t_max: float | None = None, n_search: int = 1200) -> ProtocolTrace:
    """Parity-selective energy transfer of |alpha, 0, -> and atomic conditioning.

    Even and odd photon-number parts of the input are evolved as separate
    branches.  The measurement time maximizes min(<n2>/<n> of the even branch,
    <n1>/<n> of the odd branch).
    """
    nbar = abs(alpha) ** 2
    if space is None:
        cut = max(int(nbar + 6 * abs(alpha) + 12), 4)
        space = build_space(2, cut, cut)
    model = build_model(parity_preset(lam), space)
    psi0 = make_state({"family": "coherent", "alpha1": alpha, "alpha2": 0}, space)
    if alpha == 0:
        step, post = _run_step(psi0, model, 0.0, "z", outcome)
        return ProtocolTrace("coherent_parity_cat", psi0, [step], post, {"degenerate": True, "time": 0.0})
    amps, _ = coherent_amplitudes(alpha, space.cutoff1)
    parity_mask = (np.arange(space.cutoff1 + 1) % 2 == 0)
    branches = []
    for mask in (parity_mask, ~parity_mask):
        modes = np.zeros((space.cutoff1 + 1, space.cutoff2 + 1), dtype=complex)
        modes[:, 0] = np.where(mask, amps, 0)
        branches.append(product_state(space, modes, atom=0))
    t_max = t_max or 3.0 * (nbar + 2) / abs(lam)
    ts = np.linspace(t_max / n_search, t_max, n_search)
    md = space.mode_dim
    sl = slice(outcome * md, (outcome + 1) * md)
    shape = (space.cutoff1 + 1, space.cutoff2 + 1)
    even_t = evolve_states(model, branches[0], ts)[:, sl]
    odd_t = evolve_states(model, branches[1], ts)[:, sl]
    metric = np.zeros(len(ts))
    for i in range(len(ts)):
        e1, e2 = _branch_stats(even_t[i].reshape(shape))
        o1, o2 = _branch_stats(odd_t[i].reshape(shape))
        metric[i] = min(e2 / (e1 + e2), o1 / (o1 + o2))
    t_best = float(ts[np.argmax(metric)])
    step, post = _run_step(psi0, model, t_best, "z", outcome)
    phi = measure_atom(evolve_state(model, branches[0], t_best), "z", outcome).post_state
    chi = measure_atom(evolve_state(model, branches[1], t_best), "z", outcome).post_state
    c1 = complex(np.vdot(phi.amplitudes, post.amplitudes))
    c2 = complex(np.vdot(chi.amplitudes, post.amplitudes))
    p_n1, p_n2 = _branch_stats(phi.modes()[outcome])
    c_n1, c_n2 = _branch_stats(chi.modes()[outcome])
    return ProtocolTrace("coherent_parity_cat", psi0, [step], post, {
        "time": t_best,
        "metric": float(metric.max()),
        "c_even": c1,
        "c_odd": c2,
        "decomposition_residual": float(np.linalg.norm(post.amplitudes - c1 * phi.amplitudes - c2 * chi.amplitudes)),
        "branch_overlap": float(abs(np.vdot(phi.amplitudes, chi.amplitudes))),
        "even_branch_n": [float(p_n1), float(p_n2)],
        "odd_branch_n": [float(c_n1), float(c_n2)],
        "degenerate": False,
    }, {"even_branch": phi, "odd_branch": chi})


# ---------------------------------------------------------------------------
# single-mode cat via Stark-shift conditioning


def _single_mode_vec(space, amps1d):
    modes = np.zeros((space.cutoff1 + 1, space.cutoff2 + 1), dtype=complex)
    modes[:, 0] = amps1d
    return modes[:, 0]


def fit_two_coherent(vec: np.ndarray, guesses) -> dict:
    """Least-squares fit vec ~ c1 |b1> + c2 |b2> over complex b1, b2 (c's solved linearly)."""
    cutoff = len(vec) - 1

    def design(p):
        b1, b2 = complex(p[0], p[1]), complex(p[2], p[3])
        return np.stack([coherent_amplitudes(b1, cutoff)[0], coherent_amplitudes(b2, cutoff)[0]], axis=1)

    def resid(p):
        m = design(p)
        c, *_ = np.linalg.lstsq(m, vec, rcond=None)
        r = m @ c - vec
        return np.concatenate([r.real, r.imag])

    best = None
    for g in guesses:
        p0 = [g[0].real, g[0].imag, g[1].real, g[1].imag]
        sol = optimize.least_squares(resid, p0, xtol=1e-14, ftol=1e-14, gtol=1e-14)
        if best is None or sol.cost < best.cost:
            best = sol
    m = design(best.x)
    c, *_ = np.linalg.lstsq(m, vec, rcond=None)
    b1, b2 = complex(best.x[0], best.x[1]), complex(best.x[2], best.x[3])
    return {"beta1": b1, "beta2": b2, "c1": complex(c[0]), "c2": complex(c[1]),
            "residual": float(np.linalg.norm(m @ c - vec)),
            "overlap": float(abs(np.vdot(m[:, 0], m[:, 1])))}


def single_mode_cat_verify(alpha: complex, lam: float, tau: float, omega1: float = 0.0,
                           coupling: float = 0.0, space: HilbertSpace | None = None):
    """Stark-shift conditioning of |alpha>_1 |0>_2 by one atom, read out in the x basis.

    Assumptions (the derivation is not given in closed form): NondegTwoPhoton
    Hamiltonian in the full picture with Stark term lam n1 S_z (beta1 = -lam),
    beta2 = 0, omega0 = lam, two-photon coupling ``coupling`` (default 0),
    atom prepared in (|-> + |+>)/sqrt2 and measured in the (|-> +- |+>)/sqrt2
    basis.  The fidelity with A[|b> - e^{-i lam tau}|b e^{-i lam tau}>],
    b = alpha e^{-+i gamma(tau)}, gamma = (lam/2 - omega1) tau, is maximized over
    the two outcomes and the sign convention of gamma.
    """
    if space is None:
        cut = int(abs(alpha) ** 2 + 6 * abs(alpha) + 14)
        space = build_space(2, cut, 1)
    spec = ModelSpec("NondegTwoPhoton", {"omega0": lam, "omega1": omega1, "omega2": 0.0, "lam": coupling,
                                         "beta1": -lam, "beta2": 0.0}, interaction_picture=False)
    model = build_model(spec, space)
    atom = np.array([1, 1], dtype=complex) / math.sqrt(2)
    psi0 = make_state({"family": "coherent", "alpha1": alpha, "alpha2": 0, "atom": list(atom)}, space)
    evolved = evolve_state(model, psi0, tau)
    probs = outcome_probabilities(evolved, "x")
    degenerate = abs(math.sin(lam * tau / 2)) < 1e-9
    results = []
    best = (-1.0, None, None)
    cut = space.cutoff1
    for outcome in (0, 1):
        if probs[outcome] < 1e-12:
            continue
        rec = measure_atom(evolved, "x", outcome)
        mode_vec = np.tensordot(BASES["x"][:, outcome].conj(), rec.post_state.modes(), axes=(0, 0))[:, 0]
        mode_vec = mode_vec / np.linalg.norm(mode_vec)
        for sign in (1, -1):
            gamma = (lam / 2 - omega1) * tau
            b = alpha * np.exp(-1j * sign * gamma)
            rot = np.exp(-1j * lam * tau)
            tgt = coherent_amplitudes(b, cut)[0] - rot * coherent_amplitudes(b * rot, cut)[0]
            nrm = np.linalg.norm(tgt)
            f = float(abs(np.vdot(tgt / nrm, mode_vec)) ** 2) if nrm > 1e-12 else float("nan")
            results.append({"outcome": outcome, "sign": sign, "fidelity": f})
            if not math.isnan(f) and f > best[0]:
                best = (f, outcome, rec)
    if best[2] is None:
        rec = measure_atom(evolved, "x", int(np.argmax(probs)))
        best = (float("nan"), rec.outcome, rec)
    rec = best[2]
    step = ProtocolStep(float(tau), model.tag, rec, None, model)
    mode_vec = np.tensordot(BASES["x"][:, rec.outcome].conj(), rec.post_state.modes(), axes=(0, 0))[:, 0]
    mode_vec = mode_vec / np.linalg.norm(mode_vec)
    # coherent-component fit seeded with the two Stark-rotated amplitudes
    ph_minus = np.exp(-1j * (omega1 - lam / 2) * tau)
    ph_plus = np.exp(-1j * (omega1 + lam / 2) * tau)
    fit = fit_two_coherent(mode_vec, [(alpha * ph_minus, alpha * ph_plus), (alpha * ph_plus, alpha * ph_minus)])
    trace = ProtocolTrace("single_mode_cat_verify", psi0, [step], rec.post_state, {
        "degenerate_tau": degenerate,
        "conventions": results,
        "best_fidelity": best[0],
        "fit": fit,
    })
    return best[0], trace


def circular_cat_fringes(n_total: int = 21, radius: float | None = None, n_angles: int = 720,
                         space: HilbertSpace | None = None) -> dict:
    """Angular density of (|n_l=N> + i|n_r=N>)/sqrt2 against the equal mixture.

    Sampled on the ring of maximal radial density (radius sqrt(N) in units of
    1/beta by default).
    """
    if space is None:
        space = build_space(1, n_total, n_total)
    left = make_state({"family": "circular_fock", "n_r": 0, "n_l": n_total}, space)
    right = make_state({"family": "circular_fock", "n_r": n_total, "n_l": 0}, space)
    cat = StateVector(space, left.amplitudes + 1j * right.amplitudes)
    mixture = MotionalMixture.of([left, right])
    if radius is None:
        radius = math.sqrt(n_total)
    prof_cat = angular_profile(cat, radius, n_angles)
    prof_mix = angular_profile(mixture, radius, n_angles)
    var_cat, var_mix = float(np.var(prof_cat)), float(np.var(prof_mix))
    return {"phi": np.linspace(0, 2 * np.pi, n_angles, endpoint=False), "cat": prof_cat, "mixture": prof_mix,
            "radius": radius, "var_cat": var_cat, "var_mixture": var_mix,
            "ratio": var_cat / var_mix if var_mix > 0 else float("inf")}
