"""State families on atom (x) mode (x) mode and the observables evaluated on them."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import special, stats

from .hilbert import HilbertSpace
from .operators import Operator, quadrature_ops

TAIL_TOL = 1e-8
NORM_TOL = 1e-12


class TruncationError(ValueError):
    """Cutoff too small: the discarded tail norm exceeds the tolerance."""

    def __init__(self, family: str, tail: float, tol: float = TAIL_TOL):
        super().__init__(f"{family}: discarded tail norm {tail:.3e} exceeds {tol:.1e}; raise the cutoff")
        self.tail = tail


@dataclass(frozen=True)
class StateVector:
    space: HilbertSpace
    amplitudes: np.ndarray
    tail_norm: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amps.shape != (self.space.total_dim,):
            raise ValueError(f"amplitude length {amps.size} does not match dimension {self.space.total_dim}")
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("zero vector cannot be normalized")
        if abs(norm - 1) > NORM_TOL:
            amps = amps / norm
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def vec(self) -> np.ndarray:
        return self.amplitudes

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def modes(self) -> np.ndarray:
        """Amplitudes reshaped to (atom_dim, cutoff1+1, cutoff2+1)."""
        return self.amplitudes.reshape(self.space.dims)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    space: HilbertSpace
    matrix: np.ndarray
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.space.total_dim
        if m.shape != (n, n):
            raise ValueError(f"density matrix shape {m.shape} does not match dimension {n}")
        if self.check:
            validate_density(m)
        object.__setattr__(self, "matrix", m)

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(_hermitian_part(self.matrix))[0])


def _hermitian_part(m):
    return (m + m.conj().T) / 2


def validate_density(m: np.ndarray, trace_tol: float = 1e-10, eig_tol: float = 1e-8):
    herm = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if herm > 1e-10:
        raise ValueError(f"density matrix not Hermitian (error {herm:.3e})")
    tr = np.real(np.trace(m))
    if abs(tr - 1) > trace_tol:
        raise ValueError(f"density matrix trace {tr:.12f} differs from 1")
    low = np.linalg.eigvalsh(_hermitian_part(m))[0]
    if low < -eig_tol:
        raise ValueError(f"density matrix has negative eigenvalue {low:.3e}")


# ---------------------------------------------------------------------------
# single-mode amplitude helpers (length cutoff+1) with their discarded tails


def _log_fact(n):
    return special.gammaln(np.asarray(n, dtype=float) + 1)


def coherent_amplitudes(alpha: complex, cutoff: int) -> tuple[np.ndarray, float]:
    n = np.arange(cutoff + 1)
    x = abs(alpha) ** 2
    if alpha == 0:
        amps = np.zeros(cutoff + 1, dtype=complex)
        amps[0] = 1
        return amps, 0.0
    mag = np.exp(-x / 2 + n * math.log(abs(alpha)) - 0.5 * _log_fact(n))
    amps = mag * np.exp(1j * n * np.angle(alpha))
    return amps, float(stats.poisson.sf(cutoff, x))


def squeezed_amplitudes(alpha: complex, xi: complex, cutoff: int, pad: int = 80) -> tuple[np.ndarray, float]:
    """D(alpha) S(xi)|0> with S = exp(xi a^dag^2 - xi^* a^2), computed on a padded ladder."""
    dim = cutoff + 1 + pad
    a = np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)
    ad = a.conj().T
    vac = np.zeros(dim, dtype=complex)
    vac[0] = 1
    psi = sla.expm(xi * ad @ ad - np.conj(xi) * a @ a) @ vac
    psi = sla.expm(alpha * ad - np.conj(alpha) * a) @ psi
    tail = float(np.sum(np.abs(psi[cutoff + 1:]) ** 2))
    # the padding itself must have converged
    if np.sum(np.abs(psi[-pad // 4:]) ** 2) > 1e-14:
        raise TruncationError("squeezed (padding)", float(np.sum(np.abs(psi[-pad // 4:]) ** 2)))
    return psi[: cutoff + 1], tail


def pair_coherent_modes(xi: complex, q: int, c1: int, c2: int) -> tuple[np.ndarray, float]:
    """Mode amplitudes of |xi; q> on the ladder |l+q, l> (q < 0 puts the excess on mode 2)."""
    q = int(q)
    out = np.zeros((c1 + 1, c2 + 1), dtype=complex)
    shift1, shift2 = max(q, 0), max(-q, 0)
    aq = abs(q)
    lmax = min(c1 - shift1, c2 - shift2)
    if lmax < 0:
        raise TruncationError("pair_coherent", 1.0)
    if xi == 0:
        out[shift1, shift2] = 1
        return out, 0.0
    r = abs(xi)
    l = np.arange(lmax + 1)
    # N_q^{-2} = |xi|^{-q} I_q(2|xi|); use the exponentially scaled Bessel function
    log_norm2 = -(math.log(special.ive(aq, 2 * r)) + 2 * r - aq * math.log(r))
    logmag = l * math.log(r) - 0.5 * (_log_fact(l) + _log_fact(l + aq)) + 0.5 * log_norm2
    amps = np.exp(logmag) * np.exp(1j * l * np.angle(xi))
    out[l + shift1, l + shift2] = amps
    return out, float(max(0.0, 1 - np.sum(np.abs(amps) ** 2)))


def _sector_ladder(n_total: int) -> np.ndarray:
    """J_+ = a_x^dag a_y on the fixed-N basis |k, N-k>, k = 0..N."""
    k = np.arange(n_total)
    return np.diag(np.sqrt((k + 1) * (n_total - k)), -1).astype(complex)


def _sector_to_modes(vec: np.ndarray, n_total: int, c1: int, c2: int) -> np.ndarray:
    out = np.zeros((c1 + 1, c2 + 1), dtype=complex)
    for k, amp in enumerate(vec):
        if amp != 0:
            if k > c1 or n_total - k > c2:
                raise TruncationError("fixed-N sector", float(abs(amp) ** 2))
            out[k, n_total - k] = amp
    return out


def su2_sector(tau: complex, n_total: int) -> np.ndarray:
    """|tau, j = N/2> on the basis |k, N-k> (k = n_x)."""
    jp = _sector_ladder(n_total)
    if np.isinf(abs(tau)):
        beta = math.pi / 2 * np.exp(1j * np.angle(tau)) if np.iscomplexobj(tau) else math.pi / 2
    else:
        beta = math.atan(abs(tau)) * np.exp(1j * np.angle(tau))
    start = np.zeros(n_total + 1, dtype=complex)
    start[0] = 1  # |j, -j> = |0, 2j>
    return sla.expm(beta * jp - np.conj(beta) * jp.conj().T) @ start


def rotated_sector(n_total: int, theta: float) -> np.ndarray:
    """Fock state of N quanta along the axis at angle theta from x."""
    jp = _sector_ladder(n_total)
    j2 = (jp - jp.conj().T) / 2j
    start = np.zeros(n_total + 1, dtype=complex)
    start[n_total] = 1
    return sla.expm(-2j * theta * j2) @ start


def circular_sector(n_r: int, n_l: int) -> np.ndarray:
    """(a_r^dag)^n_r (a_l^dag)^n_l |0,0> / sqrt(n_r! n_l!) expanded on |k, N-k>."""
    n_total = n_r + n_l
    # a_r^dag = (a_x^dag + i a_y^dag)/sqrt2, a_l^dag = (a_x^dag - i a_y^dag)/sqrt2
    pr = np.polynomial.polynomial.polypow([1j, 1], n_r) if n_r else np.array([1.0 + 0j])
    pl = np.polynomial.polynomial.polypow([-1j, 1], n_l) if n_l else np.array([1.0 + 0j])
    coeffs = np.polynomial.polynomial.polymul(pr, pl)  # powers of a_x^dag (coefficient of a_y^dag^(N-k))
    k = np.arange(n_total + 1)
    vec = coeffs * np.exp(0.5 * (_log_fact(k) + _log_fact(n_total - k)) - 0.5 * (_log_fact(n_r) + _log_fact(n_l)))
    return vec * 2 ** (-n_total / 2)


# ---------------------------------------------------------------------------


FAMILIES = ("fock", "coherent", "su2_coherent", "pair_coherent", "squeezed", "cat", "pair_cat",
            "rotated_fock", "circular_fock", "epr_pair")


def _atom_vector(space: HilbertSpace, atom) -> np.ndarray:
    if atom is None:
        atom = 0
    if isinstance(atom, str):
        atom = {"-": 0, "minus": 0, "ground": 0, "g": 0, "+": 1, "plus": 1, "excited": 1, "e": 1}[atom]
    if np.isscalar(atom):
        vec = np.zeros(space.atom_dim, dtype=complex)
        if not 0 <= int(atom) < space.atom_dim:
            raise IndexError(f"atom level {atom} outside [0, {space.atom_dim - 1}]")
        vec[int(atom)] = 1
        return vec
    vec = np.array([complex(*a) if isinstance(a, (list, tuple)) else complex(a) for a in atom])
    if vec.shape != (space.atom_dim,):
        raise ValueError(f"atom amplitudes need {space.atom_dim} entries")
    return vec / np.linalg.norm(vec)


def _single_mode(space, mode, amps1d, other=None):
    c1, c2 = space.cutoff1, space.cutoff2
    out = np.zeros((c1 + 1, c2 + 1), dtype=complex)
    if mode == 1:
        out[:, 0 if other is None else other] = amps1d
    elif mode == 2:
        out[0 if other is None else other, :] = amps1d
    else:
        raise ValueError(f"mode must be 1 or 2, got {mode!r}")
    return out


def mode_amplitudes(space: HilbertSpace, family: str, p: dict) -> tuple[np.ndarray, float]:
    """(mode amplitude matrix, discarded tail norm) for one state family."""
    c1, c2 = space.cutoff1, space.cutoff2
    if family == "fock":
        out = np.zeros((c1 + 1, c2 + 1), dtype=complex)
        n1, n2 = int(p.get("n1", 0)), int(p.get("n2", 0))
        if not (0 <= n1 <= c1 and 0 <= n2 <= c2):
            raise TruncationError("fock", 1.0)
        out[n1, n2] = 1
        return out, 0.0
    if family == "coherent":
        a1, t1 = coherent_amplitudes(complex(p.get("alpha1", 0)), c1)
        a2, t2 = coherent_amplitudes(complex(p.get("alpha2", 0)), c2)
        return np.outer(a1, a2), 1 - (1 - t1) * (1 - t2)
    if family == "squeezed":
        mode = int(p.get("mode", 1))
        amps, tail = squeezed_amplitudes(complex(p.get("alpha", 0)), complex(p["xi"]), space.dims[mode] - 1)
        return _single_mode(space, mode, amps), tail
    if family == "cat":
        mode = int(p.get("mode", 1))
        alpha = complex(p["alpha"])
        plus, tail = coherent_amplitudes(alpha, space.dims[mode] - 1)
        minus, _ = coherent_amplitudes(-alpha, space.dims[mode] - 1)
        return _single_mode(space, mode, plus + np.exp(1j * p.get("phi", 0.0)) * minus), tail
    if family in ("pair_coherent", "pair_cat"):
        xi, q = complex(p["xi"]), int(p.get("q", 0))
        plus, tail = pair_coherent_modes(xi, q, c1, c2)
        if family == "pair_coherent":
            return plus, tail
        minus, _ = pair_coherent_modes(-xi, q, c1, c2)
        return plus + np.exp(1j * p.get("phi", 0.0)) * minus, tail
    if family in ("su2_coherent", "rotated_fock", "circular_fock"):
        if family == "su2_coherent":
            two_j = int(round(2 * float(p["j"])))
            vec = su2_sector(complex(p["tau"]) if not np.isinf(abs(complex(p["tau"]))) else p["tau"], two_j)
        elif family == "rotated_fock":
            two_j = int(p["N"])
            vec = rotated_sector(two_j, float(p.get("theta", 0.0)))
        else:
            two_j = int(p["n_r"]) + int(p["n_l"])
            vec = circular_sector(int(p["n_r"]), int(p["n_l"]))
        return _sector_to_modes(vec, two_j, c1, c2), 0.0
    if family == "epr_pair":
        if c1 < 1 or c2 < 1:
            raise TruncationError("epr_pair", 0.5)
        out = np.zeros((c1 + 1, c2 + 1), dtype=complex)
        out[0, 1] = np.exp(1j * p.get("phi", 0.0)) / math.sqrt(2)
        out[1, 0] = 1 / math.sqrt(2)
        return out, 0.0
    raise ValueError(f"unknown state family {family!r}; expected one of {FAMILIES}")


def make_state(spec: dict, space: HilbertSpace, tail_tol: float = TAIL_TOL) -> StateVector:
    """Build a normalized state from ``{"family": ..., <parameters>, "atom": level}``.

    ``atom`` is a level index, a name (``"-"``/``"+"``) or a list of amplitudes.
    Raises :class:`TruncationError` if the cutoffs discard more than ``tail_tol``.
    """
    spec = dict(spec)
    family = spec.pop("family")
    atom = _atom_vector(space, spec.pop("atom", 0))
    modes, tail = mode_amplitudes(space, family, spec)
    if tail >= tail_tol:
        raise TruncationError(family, tail, tail_tol)
    amps = np.kron(atom, modes.ravel())
    return StateVector(space, amps, tail_norm=tail)


def product_state(space: HilbertSpace, modes: np.ndarray, atom=0) -> StateVector:
    return StateVector(space, np.kron(_atom_vector(space, atom), np.asarray(modes).ravel()))


# ---------------------------------------------------------------------------
# observables


def _check_space(state, op):
    if state.space != op.space:
        raise ValueError(f"space mismatch: {state.space} vs {op.space}")


def expectation(state, op: Operator) -> complex:
    _check_space(state, op)
    if isinstance(state, DensityMatrix):
        return complex(np.sum(op.matrix.multiply(state.matrix.T)))
    psi = state.amplitudes
    return complex(np.vdot(psi, op.matrix @ psi))


def variance(state, op: Operator) -> float:
    _check_space(state, op)
    if isinstance(state, DensityMatrix):
        mean = expectation(state, op)
        return float(np.real(expectation(state, op @ op) - mean ** 2))
    psi = state.amplitudes
    opsi = op.matrix @ psi
    mean = np.vdot(psi, opsi)
    # <O^2> = ||O psi||^2 for Hermitian O
    if op.is_hermitian():
        return float(np.real(np.vdot(opsi, opsi) - mean * np.conj(mean)))
    return float(np.real(np.vdot(psi, op.matrix @ opsi) - mean ** 2))


def fidelity(a, b) -> float:
    """|<a|b>|^2 for pure states; <b|rho|b> if one argument is mixed."""
    if a.space != b.space:
        raise ValueError(f"space mismatch: {a.space} vs {b.space}")
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        sa = sla.sqrtm(a.matrix)
        return float(np.real(np.trace(sla.sqrtm(sa @ b.matrix @ sa))) ** 2)
    if isinstance(a, DensityMatrix):
        a, b = b, a
    if isinstance(b, DensityMatrix):
        return float(np.real(np.vdot(a.amplitudes, b.matrix @ a.amplitudes)))
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))


def electronic_populations(state) -> np.ndarray:
    space = state.space
    if isinstance(state, DensityMatrix):
        diag = np.real(np.diagonal(state.matrix)).reshape(space.atom_dim, -1)
    else:
        diag = (np.abs(state.amplitudes) ** 2).reshape(space.atom_dim, -1)
    return diag.sum(axis=1)


def motional_density(state) -> np.ndarray:
    """Reduced density matrix of the two modes (atom traced out)."""
    space = state.space
    if isinstance(state, DensityMatrix):
        m = state.matrix.reshape(space.atom_dim, space.mode_dim, space.atom_dim, space.mode_dim)
        return np.einsum("aiaj->ij", m)
    c = state.amplitudes.reshape(space.atom_dim, space.mode_dim)
    return c.T @ c.conj()


def project_atom(state: StateVector, level: int) -> np.ndarray:
    """Unnormalized mode amplitudes conditioned on an atom level."""
    return state.modes()[level].copy()


# ---------------------------------------------------------------------------
# spatial densities


def hermite_functions(n_max: int, x: np.ndarray) -> np.ndarray:
    """Normalized oscillator eigenfunctions h_n(x), n = 0..n_max, by stable recurrence."""
    x = np.asarray(x, dtype=float)
    h = np.zeros((n_max + 1,) + x.shape)
    h[0] = math.pi ** -0.25 * np.exp(-x * x / 2)
    if n_max >= 1:
        h[1] = math.sqrt(2) * x * h[0]
    for n in range(1, n_max):
        h[n + 1] = x * math.sqrt(2 / (n + 1)) * h[n] - math.sqrt(n / (n + 1)) * h[n - 1]
    return h


def _pure_components(state) -> list[tuple[float, np.ndarray]]:
    """Decompose into weighted pure mode-amplitude matrices."""
    if isinstance(state, np.ndarray):
        arr = np.asarray(state, dtype=complex)
        return [(1.0, arr / np.linalg.norm(arr))]
    space = state.space
    shape = (space.cutoff1 + 1, space.cutoff2 + 1)
    if isinstance(state, StateVector):
        comps = []
        for c in state.modes():
            w = float(np.sum(np.abs(c) ** 2))
            if w > 0:
                comps.append((w, c / math.sqrt(w)))
        return comps
    vals, vecs = np.linalg.eigh(_hermitian_part(motional_density(state)))
    return [(float(v), vecs[:, i].reshape(shape)) for i, v in enumerate(vals) if v > 1e-14]


def spatial_density(state, x, y) -> np.ndarray:
    """|Psi(x', y')|^2 on the grid x (rows) by y (columns), lengths in units of 1/beta.

    ``state`` may be a StateVector (atom levels summed incoherently), a
    DensityMatrix, a ``MotionalMixture`` or a bare mode-amplitude matrix.
    """
    if isinstance(state, MotionalMixture):
        comps = state.components
    else:
        comps = _pure_components(state)
    c1, c2 = comps[0][1].shape[0] - 1, comps[0][1].shape[1] - 1
    hx = hermite_functions(c1, np.asarray(x))
    hy = hermite_functions(c2, np.asarray(y))
    out = np.zeros((len(np.atleast_1d(x)), len(np.atleast_1d(y))))
    for w, c in comps:
        psi = hx.T @ c @ hy
        out += w * np.abs(psi) ** 2
    return out


@dataclass
class MotionalMixture:
    """Incoherent mixture of pure mode-amplitude matrices."""

    components: list[tuple[float, np.ndarray]]

    @classmethod
    def of(cls, states, weights=None):
        weights = np.full(len(states), 1 / len(states)) if weights is None else np.asarray(weights)
        comps = []
        for w, s in zip(weights, states):
            for w2, c in _pure_components(s):
                comps.append((float(w * w2), c))
        return cls(comps)


def angular_profile(state, radius: float, n_angles: int = 360) -> np.ndarray:
    """Density sampled on a circle of the given radius."""
    phi = np.linspace(0, 2 * np.pi, n_angles, endpoint=False)
    comps = state.components if isinstance(state, MotionalMixture) else _pure_components(state)
    c1, c2 = comps[0][1].shape[0] - 1, comps[0][1].shape[1] - 1
    hx = hermite_functions(c1, radius * np.cos(phi))
    hy = hermite_functions(c2, radius * np.sin(phi))
    out = np.zeros(n_angles)
    for w, c in comps:
        out += w * np.abs(np.einsum("ip,ij,jp->p", hx, c, hy)) ** 2
    return out


# ---------------------------------------------------------------------------


def squeezing_check(state, phase1: float = 0.0, phase2: float = 0.0):
    """(var d1, var d2, d1 squeezed, d2 squeezed); squeezed means variance < 1/4."""
    d1, d2 = quadrature_ops(state.space, phase1, phase2)
    v1, v2 = variance(state, d1), variance(state, d2)
    return v1, v2, v1 < 0.25, v2 < 0.25


# ---------------------------------------------------------------------------
# serialization


def state_to_dict(state: StateVector) -> dict:
    return {
        "space": state.space.header(),
        "tail_norm": state.tail_norm,
        "amplitudes": [[float(z.real), float(z.imag)] for z in state.amplitudes],
    }


def state_from_dict(data: dict) -> StateVector:
    space = HilbertSpace(**data["space"])
    amps = np.array([complex(re, im) for re, im in data["amplitudes"]])
    return StateVector(space, amps, tail_norm=float(data.get("tail_norm", 0.0)))


def state_to_json(state: StateVector) -> str:
    return json.dumps(state_to_dict(state))


def state_from_json(text: str) -> StateVector:
    return state_from_dict(json.loads(text))
