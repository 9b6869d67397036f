"""Exact unitary dynamics from per-sector eigendecompositions."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import maximum_filter1d, uniform_filter1d
from scipy.sparse.csgraph import connected_components

from .hilbert import joint_labels
from .models import BuiltModel
from .operators import Operator
from .states import StateVector

GUARD_DEFAULT = 1e-8
BLOCK_LEAK_TOL = 1e-12
TIME_CHUNK = 512


class GuardError(RuntimeError):
    """Population reached states whose couplings were truncated."""

    def __init__(self, time: float, leaked: float, guard: float):
        super().__init__(f"truncation guard exceeded at t={time:.6g}: leaked norm {leaked:.3e} > {guard:.1e}")
        self.time = time
        self.leaked = leaked


@dataclass
class Spectrum:
    """Block-diagonal eigendecomposition of H: one (indices, energies, vectors) per block."""

    dim: int
    blocks: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    sectored: bool

    def apply(self, psi: np.ndarray, times) -> np.ndarray:
        """exp(-i H t) psi for every t; shape (dim, len(times))."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.zeros((self.dim, len(times)), dtype=complex)
        for idx, energies, vecs in self.blocks:
            c = vecs.conj().T @ psi[idx]
            if not np.any(c):
                continue
            phases = np.exp(-1j * np.outer(energies, times))
            out[idx] = vecs @ (phases * c[:, None])
        return out

    def unitary(self, t: float) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for idx, energies, vecs in self.blocks:
            u = (vecs * np.exp(-1j * energies * t)) @ vecs.conj().T
            r, c = np.meshgrid(idx, idx, indexing="ij")
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(u.ravel())
        return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.dim, self.dim)).tocsr()


def partition(model: BuiltModel) -> tuple[list[np.ndarray], bool]:
    """Invariant index blocks from the registered Fock-diagonal constants.

    Blocks are refined by the connectivity of H, which is exact.  Returns
    ``(blocks, sectored)``; ``sectored`` is False when no usable constant
    was registered or H leaks between the proposed sectors.
    """
    h = model.hamiltonian.matrix
    diagonals = [k.diagonal() for _, k in model.conserved if k.is_diagonal()]
    if not diagonals:
        return [np.arange(model.space.total_dim)], False
    groups = joint_labels(model.space, diagonals)
    label = np.empty(model.space.total_dim, dtype=int)
    for g, idx in enumerate(groups):
        label[idx] = g
    coo = h.tocoo()
    cross = label[coo.row] != label[coo.col]
    if cross.any() and np.max(np.abs(coo.data[cross])) > BLOCK_LEAK_TOL:
        return [np.arange(model.space.total_dim)], False
    blocks = []
    for idx in groups:
        sub = h[idx][:, idx]
        n, comp = connected_components(abs(sub) > 0, directed=False)
        for c in range(n):
            blocks.append(idx[comp == c])
    return blocks, True


_SPECTRUM_CACHE: dict[int, tuple[BuiltModel, Spectrum]] = {}


def spectrum(model: BuiltModel, sectored: bool = True) -> Spectrum:
    key = id(model) * 2 + int(sectored)
    hit = _SPECTRUM_CACHE.get(key)
    if hit is not None and hit[0] is model:
        return hit[1]
    if sectored:
        blocks, used = partition(model)
    else:
        blocks, used = [np.arange(model.space.total_dim)], False
    h = model.hamiltonian.matrix
    out = []
    for idx in blocks:
        sub = h[idx][:, idx].toarray()
        energies, vecs = np.linalg.eigh((sub + sub.conj().T) / 2)
        out.append((idx, energies, vecs))
    spec = Spectrum(model.space.total_dim, out, used)
    if len(_SPECTRUM_CACHE) > 64:
        _SPECTRUM_CACHE.clear()
    _SPECTRUM_CACHE[key] = (model, spec)
    return spec


def propagator(model: BuiltModel, t: float, sectored: bool = True) -> Operator:
    """U(t) = exp(-i H t)."""
    return Operator(model.space, spectrum(model, sectored).unitary(t))


def evolve_state(model: BuiltModel, psi0: StateVector, t: float) -> StateVector:
    amps = spectrum(model).apply(psi0.amplitudes, [t])[:, 0]
    return StateVector(model.space, amps, tail_norm=psi0.tail_norm)


def evolve_states(model: BuiltModel, psi0: StateVector, times) -> np.ndarray:
    """Amplitudes at each time, shape (len(times), total_dim)."""
    return spectrum(model).apply(psi0.amplitudes, times).T


@dataclass
class TimeSeries:
    times: np.ndarray
    values: dict[str, np.ndarray]
    leaked_norm: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) < 0):
            raise ValueError("times must be monotone non-decreasing")

    def __getitem__(self, name):
        return self.values[name]

    def columns(self) -> list[tuple[str, np.ndarray]]:
        cols = [("t", self.times)]
        for name, arr in self.values.items():
            arr = np.asarray(arr)
            if np.iscomplexobj(arr) and np.max(np.abs(arr.imag), initial=0) > 1e-12:
                cols += [(f"{name}_re", arr.real), (f"{name}_im", arr.imag)]
            else:
                cols.append((name, np.real(arr)))
        cols.append(("leaked_norm", self.leaked_norm))
        return cols

    def to_csv(self, path=None, comment: str | None = None) -> str:
        """17-significant-digit CSV; the first line is a '#' comment when given."""
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        cols = self.columns()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([name for name, _ in cols])
        for row in zip(*(arr for _, arr in cols)):
            writer.writerow([format_number(v) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def format_number(v) -> str:
    return f"{float(v):.17g}"


def _observe(model, psi0, times, ops: dict[str, Operator], guard, squares=()):
    if psi0.space != model.space:
        raise ValueError("initial state and model live on different spaces")
    if psi0.tail_norm > guard:
        raise GuardError(0.0, psi0.tail_norm, guard)
    times = np.asarray(times, dtype=float)
    spec = spectrum(model)
    values = {name: np.zeros(len(times), dtype=complex) for name in ops}
    seconds = {name: np.zeros(len(times)) for name in squares}
    leaked = np.zeros(len(times))
    boundary = model.boundary
    for start in range(0, len(times), TIME_CHUNK):
        sl = slice(start, start + TIME_CHUNK)
        psi = spec.apply(psi0.amplitudes, times[sl])
        leaked[sl] = np.sum(np.abs(psi[boundary]) ** 2, axis=0)
        for name, op in ops.items():
            opsi = op.matrix @ psi
            values[name][sl] = np.sum(psi.conj() * opsi, axis=0)
            if name in seconds:
                seconds[name][sl] = np.sum(np.abs(opsi) ** 2, axis=0)
    running = np.maximum.accumulate(leaked) if len(leaked) else leaked
    over = np.flatnonzero(running > guard)
    if over.size:
        i = over[0]
        raise GuardError(float(times[i]), float(running[i]), guard)
    return times, values, seconds, running


def evolve_series(model: BuiltModel, psi0: StateVector, times, observables, guard: float = GUARD_DEFAULT) -> TimeSeries:
    """Expectation values along exp(-iHt)psi0.

    ``observables`` is a dict name -> Operator (or a list, named obs0, obs1, ...).
    ``leaked_norm`` is the running maximum of the population on states coupled
    beyond the cutoff; exceeding ``guard`` raises :class:`GuardError`.
    """
    if not isinstance(observables, dict):
        observables = {f"obs{i}": op for i, op in enumerate(observables)}
    times, values, _, leaked = _observe(model, psi0, times, observables, guard)
    return TimeSeries(times, values, leaked, {"model": model.tag, "sectored": spectrum(model).sectored})


def variance_series(model: BuiltModel, psi0: StateVector, times, op: Operator, guard: float = GUARD_DEFAULT) -> TimeSeries:
    """<O^2> - <O>^2 along the trajectory (O Hermitian)."""
    if not op.is_hermitian():
        raise ValueError("variance_series needs a Hermitian operator")
    times, values, seconds, leaked = _observe(model, psi0, times, {"op": op}, guard, squares=("op",))
    mean = values["op"].real
    return TimeSeries(times, {"mean": mean, "variance": seconds["op"] - mean ** 2}, leaked,
                      {"model": model.tag})


PARITY_LOW = 0.3
PARITY_HIGH = 0.7


@dataclass
class ParityClass:
    """Post-plateau behaviour of a single-mode photon-number trajectory."""

    label: str
    plateau_start: float
    plateau_end: float
    extremum_time: float
    extremum_value: float
    n: int

    @property
    def transfer(self) -> bool:
        return self.label == "transfer"

    @property
    def reabsorption(self) -> bool:
        return self.label == "reabsorption"

    def to_dict(self) -> dict:
        return {"label": self.label, "transfer": self.transfer, "reabsorption": self.reabsorption,
                "plateau_start": self.plateau_start, "plateau_end": self.plateau_end,
                "extremum_time": self.extremum_time, "extremum_value": self.extremum_value, "n": self.n}


def _window(times, width):
    dt = times[1] - times[0]
    return max(1, int(round(width / dt)))


def _turning_points(y) -> np.ndarray:
    """Indices of local extrema; flat runs of equal samples count once."""
    d = np.sign(np.diff(y))
    idx = np.flatnonzero(d)
    if idx.size < 2:
        return np.array([], dtype=int)
    turns = np.flatnonzero(d[idx[1:]] != d[idx[:-1]])
    return idx[turns] + 1


def classify_parity(times, n1, n: int, smooth: float = 1.0, plateau_tol: float = 0.1,
                    leave_tol: float = 0.2) -> ParityClass:
    """Classify <n1(t)> starting from |n, 0> as transfer, reabsorption or undecided.

    The trajectory is smoothed over ``smooth`` time units.  The plateau starts
    when the smoothed curve first comes within ``plateau_tol * n`` of n/2 and
    ends when it departs by more than ``leave_tol * n``; the first smoothed
    extremum after that is compared against 0.3 n and 0.7 n.
    """
    times = np.asarray(times, dtype=float)
    n1 = np.asarray(n1, dtype=float)
    sm = uniform_filter1d(n1, _window(times, smooth), mode="nearest")
    dev = np.abs(sm - n / 2)
    near = np.flatnonzero(dev < plateau_tol * n)
    if near.size == 0:
        return ParityClass("undecided", np.nan, np.nan, np.nan, np.nan, n)
    start = near[0]
    away = np.flatnonzero(dev[start:] > leave_tol * n)
    if away.size == 0:
        return ParityClass("undecided", times[start], np.nan, np.nan, np.nan, n)
    leave = start + away[0]
    ext = _turning_points(sm)
    ext = ext[ext > leave]
    if ext.size == 0:
        return ParityClass("undecided", times[start], times[leave], np.nan, np.nan, n)
    i = ext[0]
    value = float(n1[i])
    if value < PARITY_LOW * n:
        label = "transfer"
    elif value > PARITY_HIGH * n:
        label = "reabsorption"
    else:
        label = "undecided"
    return ParityClass(label, float(times[start]), float(times[leave]), float(times[i]), value, n)


@dataclass
class CollapseRevival:
    envelope: np.ndarray
    min_time: float
    min_value: float
    revival_time: float
    revival_value: float

    @property
    def ratio(self) -> float:
        return self.revival_value / self.min_value if self.min_value > 0 else np.inf

    def to_dict(self) -> dict:
        return {"min_time": self.min_time, "min_value": self.min_value, "revival_time": self.revival_time,
                "revival_value": self.revival_value, "ratio": self.ratio}


def collapse_revival(times, signal, window: float) -> CollapseRevival:
    """Running-max envelope of |signal - mean| over ``window`` time units.

    The collapse point is the global envelope minimum; the revival is the
    largest envelope value after it.
    """
    times = np.asarray(times, dtype=float)
    signal = np.asarray(signal, dtype=float)
    env = maximum_filter1d(np.abs(signal - signal.mean()), _window(times, window), mode="nearest")
    i = int(np.argmin(env))
    j = i + int(np.argmax(env[i:]))
    return CollapseRevival(env, float(times[i]), float(env[i]), float(times[j]), float(env[j]))
