"""Spontaneous-emission master equation with recoil, and dark steady states.

    d rho/dt = -i[H, rho] + (Gamma/2)(2 s- R(rho) s+ - s+ s- rho - rho s+ s-)

R is the recoil average over the emission direction (identity in the
Lamb-Dicke limit).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.csgraph import breadth_first_order

from .models import BuiltModel
from .operators import annihilate, create, number
from .states import DensityMatrix

RECOIL_KINDS = ("none", "uniform", "custom")


class IntegrationError(RuntimeError):
    pass


@dataclass
class LindbladParams:
    gamma: float
    recoil: str = "none"
    k_eta: tuple[float, float] = (0.0, 0.0)
    W: Callable | None = None  # W(u, v) on [-1, 1]^2 for recoil="custom"
    order: int = 8

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.recoil not in RECOIL_KINDS:
            raise ValueError(f"recoil must be one of {RECOIL_KINDS}, got {self.recoil!r}")
        if np.isscalar(self.k_eta):
            self.k_eta = (float(self.k_eta), float(self.k_eta))
        if self.recoil == "custom":
            if self.W is None:
                raise ValueError("recoil='custom' needs a W(u, v) function")
            norm = self.weight_norm()
            if abs(norm - 1) > 1e-6:
                raise ValueError(f"(1/4) integral of W must be 1, got {norm:.8f}")

    def weights(self, order: int | None = None):
        """Quadrature nodes u, v and weights including the 1/4 prefactor and W."""
        nodes, w = np.polynomial.legendre.leggauss(order or self.order)
        U, V = np.meshgrid(nodes, nodes, indexing="ij")
        ww = np.outer(w, w) / 4
        if self.recoil == "custom":
            ww = ww * np.asarray(self.W(U, V), dtype=float)
        return nodes, ww

    def weight_norm(self) -> float:
        return float(np.sum(self.weights(16)[1]))


# ---------------------------------------------------------------------------
# recoil


def _mode_kicks(dim, k, nodes):
    """exp(i k u (a + a^dag)) on one truncated mode for each node u (exactly unitary)."""
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    x = a + a.T
    return [sla.expm(1j * k * u * x) for u in nodes]


def recoil_modes(block: np.ndarray, space, params: LindbladParams, order: int | None = None) -> np.ndarray:
    """Recoil average of a mode-space operator (mode_dim x mode_dim)."""
    if params.recoil == "none" or (params.k_eta[0] == 0 and params.k_eta[1] == 0):
        return block
    d1, d2 = space.cutoff1 + 1, space.cutoff2 + 1
    nodes, ww = params.weights(order)
    kx = _mode_kicks(d1, params.k_eta[0], nodes)
    ky = _mode_kicks(d2, params.k_eta[1], nodes)
    t = block.reshape(d1, d2, d1, d2)
    out = np.zeros_like(t)
    for i, Kx in enumerate(kx):
        # x kick first: K rho K^dag on the (0, 2) axes
        tx = np.einsum("ab,bjcl,dc->ajdl", Kx, t, Kx.conj(), optimize=True)
        for j, Ky in enumerate(ky):
            if ww[i, j] == 0:
                continue
            out += ww[i, j] * np.einsum("ab,ibkc,dc->iakd", Ky, tx, Ky.conj(), optimize=True)
    return out.reshape(d1 * d2, d1 * d2)


def recoil_map(rho: DensityMatrix, params: LindbladParams, order: int | None = None) -> DensityMatrix:
    """(1/4) int W(u,v) K(u,v) rho K(u,v)^dag du dv with K = exp(i k (u x + v y)).

    Each atom-level block is averaged separately; the kicks act on the modes.
    """
    space = rho.space
    md = space.mode_dim
    out = np.empty_like(rho.matrix)
    for a in range(space.atom_dim):
        for b in range(space.atom_dim):
            blk = rho.matrix[a * md:(a + 1) * md, b * md:(b + 1) * md]
            out[a * md:(a + 1) * md, b * md:(b + 1) * md] = recoil_modes(blk, space, params, order)
    return DensityMatrix(space, out, check=False)


# ---------------------------------------------------------------------------
# Liouvillian on a reachable subspace


def reachable_subspace(model: BuiltModel, rho0: np.ndarray, params: LindbladParams) -> np.ndarray:
    """Basis indices reachable from the support of rho0 through H and the jump.

    With recoil every motional level of a mode can be reached, so the full
    space is returned.
    """
    n = model.space.total_dim
    if params.recoil != "none" and any(params.k_eta):
        return np.arange(n)
    md = model.space.mode_dim
    h = model.hamiltonian.matrix
    jump = sp.diags(np.ones(md), md, shape=(n, n)) if params.gamma > 0 else sp.csr_matrix((n, n))
    adj = (abs(h) + abs(jump) + abs(jump.T)) > 0
    support = np.flatnonzero(np.abs(np.diagonal(rho0)) > 0)
    seen = np.zeros(n, dtype=bool)
    for s in support:
        if not seen[s]:
            seen[breadth_first_order(adj, s, directed=False, return_predecessors=False)] = True
    return np.flatnonzero(seen)


@dataclass
class _Reduced:
    idx: np.ndarray
    h: np.ndarray
    excited: np.ndarray  # positions (within idx) of excited-level states
    ground_of: np.ndarray  # matching ground-level positions (-1 when absent)
    full_excited: np.ndarray  # global indices of all excited states, for recoil
    gamma: float


def _reduce(model: BuiltModel, params: LindbladParams, idx: np.ndarray) -> _Reduced:
    space = model.space
    md = space.mode_dim
    pos = -np.ones(space.total_dim, dtype=int)
    pos[idx] = np.arange(len(idx))
    lab = space.labels[idx]
    exc = np.flatnonzero(lab[:, 0] == 1)
    ground = pos[idx[exc] - md]
    h = model.hamiltonian.matrix[idx][:, idx].toarray()
    return _Reduced(idx, h, exc, ground, np.arange(md, 2 * md), params.gamma)


def _rhs_factory(model: BuiltModel, params: LindbladParams, red: _Reduced):
    h = red.h
    n = len(red.idx)
    exc = red.excited
    g = red.gamma
    md = model.space.mode_dim
    full = len(red.idx) == model.space.total_dim
    use_recoil = params.recoil != "none" and any(params.k_eta)
    if use_recoil and not full:
        raise ValueError("recoil requires the full space")
    valid = red.ground_of >= 0

    def rhs(_t, y):
        rho = y.reshape(n, n)
        out = -1j * (h @ rho - rho @ h)
        if g > 0:
            # -(G/2){s+ s-, rho}: excited rows and columns
            out[exc, :] -= 0.5 * g * rho[exc, :]
            out[:, exc] -= 0.5 * g * rho[:, exc]
            blk = rho[np.ix_(exc, exc)]
            if use_recoil:
                blk = recoil_modes(blk, model.space, params)
            gi = red.ground_of[valid]
            out[np.ix_(gi, gi)] += g * blk[np.ix_(valid, valid)]
        return out.ravel()

    return rhs


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[DensityMatrix]
    diagnostics: dict = field(default_factory=dict)

    def traces(self):
        return np.array([s.trace() for s in self.states])

    def excited_population(self):
        md = self.states[0].space.mode_dim
        return np.array([float(np.real(np.trace(s.matrix[md:2 * md, md:2 * md]))) for s in self.states])

    def to_csv(self, gamma: float, target=None, comment: str | None = None) -> str:
        from .evolve import format_number
        from .states import fidelity

        lines = [f"# {comment}"] if comment else []
        header = ["t", "trace", "fluorescence_rate"] + (["fidelity"] if target is not None else [])
        lines.append(",".join(header))
        for t, s, pe in zip(self.times, self.states, self.excited_population()):
            row = [t, s.trace(), gamma * pe]
            if target is not None:
                row.append(fidelity(target, s))
            lines.append(",".join(format_number(v) for v in row))
        return "\n".join(lines) + "\n"


def _embed(space, red, block):
    full = np.zeros((space.total_dim, space.total_dim), dtype=complex)
    full[np.ix_(red.idx, red.idx)] = block
    return full


def integrate(model: BuiltModel, params: LindbladParams, rho0: DensityMatrix, t_end: float, dt: float,
              rtol: float = 1e-10, atol: float = 1e-12, check: bool = True) -> Trajectory:
    """Master-equation trajectory sampled every ``dt`` up to ``t_end`` (adaptive RK45).

    Work is confined to the subspace reachable from rho0 through H and the
    jump operator, which is exact and often much smaller than the full space.
    """
    if model.space.atom_dim != 2:
        raise ValueError("the decay channel needs a two-level atom")
    if rho0.space != model.space:
        raise ValueError("rho0 lives on a different space")
    idx = reachable_subspace(model, rho0.matrix, params)
    red = _reduce(model, params, idx)
    rhs = _rhs_factory(model, params, red)
    n_out = int(round(t_end / dt))
    times = np.linspace(0.0, n_out * dt, n_out + 1)
    y0 = rho0.matrix[np.ix_(idx, idx)].ravel()
    sol = solve_ivp(rhs, (0.0, times[-1]), y0, method="RK45", t_eval=times, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise IntegrationError(f"integration stopped at t={sol.t[-1] if sol.t.size else 0.0:.6g}: {sol.message}")
    states = []
    n = len(idx)
    worst_trace, worst_eig = 0.0, 0.0
    for k in range(sol.y.shape[1]):
        blk = sol.y[:, k].reshape(n, n)
        blk = (blk + blk.conj().T) / 2
        worst_trace = max(worst_trace, abs(np.real(np.trace(blk)) - np.real(np.trace(rho0.matrix))))
        if check:
            worst_eig = min(worst_eig, float(np.linalg.eigvalsh(blk)[0]))
        states.append(DensityMatrix(model.space, _embed(model.space, red, blk), check=False))
    diag = {"subspace_dim": n, "trace_drift": worst_trace, "min_eigenvalue": worst_eig,
            "n_rhs": int(sol.nfev)}
    if check and (worst_trace > 1e-8 or worst_eig < -1e-8):
        raise IntegrationError(f"integrator accuracy lost: trace drift {worst_trace:.2e}, min eigenvalue {worst_eig:.2e}")
    return Trajectory(sol.t, states, diag)


@dataclass
class SteadyState:
    state: DensityMatrix
    fluorescence_rate: float
    residual: float
    commutator: float
    converged: bool
    dark: bool
    time: float


DENSE_SUPEROP_DIM = 48


def liouvillian(red: _Reduced, rhs) -> np.ndarray:
    """Dense superoperator of ``rhs`` on row-major vec(rho), built column by column."""
    n = len(red.idx)
    cols = np.empty((n * n, n * n), dtype=complex)
    e = np.zeros(n * n, dtype=complex)
    for k in range(n * n):
        e[k] = 1
        cols[:, k] = rhs(0.0, e)
        e[k] = 0
    return cols


def steady_state(model: BuiltModel, params: LindbladParams, rho0: DensityMatrix, t_cap: float = 2e4,
                 tol: float = 1e-10, chunk: float = 50.0) -> SteadyState:
    """Propagate until max|d rho/dt| < tol (or t_cap) and report Gamma <s+ s->.

    Small reachable subspaces are propagated with the exact exponential of
    the Liouvillian, larger ones with adaptive RK45.  A converged state with ||[H, rho]|| <= 1e-8 is flagged dark.
    """
    idx = reachable_subspace(model, rho0.matrix, params)
    red = _reduce(model, params, idx)
    rhs = _rhs_factory(model, params, red)
    n = len(idx)
    y = rho0.matrix[np.ix_(idx, idx)].ravel()
    t = 0.0
    residual = float(np.max(np.abs(rhs(t, y))))
    if n <= DENSE_SUPEROP_DIM:
        # exact propagator of the small Liouvillian; repeated squaring doubles the step
        step = chunk
        prop = sla.expm(liouvillian(red, rhs) * step)
        while residual >= tol and t < t_cap:
            y = prop @ y
            t += step
            residual = float(np.max(np.abs(rhs(t, y))))
            if step < 1e3:
                prop = prop @ prop
                step *= 2
    else:
        span = chunk
        while residual >= tol and t < t_cap:
            step = min(span, t_cap - t)
            sol = solve_ivp(rhs, (t, t + step), y, method="RK45", rtol=1e-11, atol=1e-13)
            if sol.status != 0:
                raise IntegrationError(f"integration stopped at t={sol.t[-1]:.6g}: {sol.message}")
            y = sol.y[:, -1]
            t += step
            span = min(span * 2, 1e3)
            residual = float(np.max(np.abs(rhs(t, y))))
    blk = y.reshape(n, n)
    blk = (blk + blk.conj().T) / 2
    blk /= np.real(np.trace(blk))
    comm = red.h @ blk - blk @ red.h
    comm_norm = float(np.max(np.abs(comm)))
    pe = float(np.real(np.sum(np.diagonal(blk)[red.excited])))
    state = DensityMatrix(model.space, _embed(model.space, red, blk), check=False)
    converged = residual < tol
    return SteadyState(state, params.gamma * pe, residual, comm_norm, converged,
                       converged and comm_norm <= 1e-8, t)


def dominant_motional_state(rho: DensityMatrix) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and eigenvector of the reduced motional density."""
    from .states import motional_density

    vals, vecs = np.linalg.eigh(motional_density(rho))
    return float(vals[-1]), vecs[:, -1]


# ---------------------------------------------------------------------------
# vibrational operators for dark-state engineering


def squeezed_cat_coefficients(alpha: complex, xi: complex):
    """(g1 e^{-i phi1}, g2 e^{-i phi2}, g0 e^{-i phi0}, zeta) for even/odd D(alpha)S(xi)|0>.

    With b = mu a + nu a^dag (mu = cosh 2r, nu = -e^{i theta} sinh 2r) and
    b |alpha, xi> = gamma |alpha, xi>, the operator -(mu^2 a^2 + nu^2 a^dag^2
    + 2 mu nu a^dag a) = -b^2 + mu nu has eigenvalue zeta = mu nu - gamma^2 on both
    parity components.
    """
    r, theta = abs(xi), np.angle(xi)
    mu = math.cosh(2 * r)
    nu = -np.exp(1j * theta) * math.sinh(2 * r)
    gamma = mu * alpha + nu * np.conj(alpha)
    return mu * mu, nu * nu, mu * nu, mu * nu - gamma * gamma


def vibrational_operator(kind: str, p: dict) -> Callable:
    """Builder ``space -> Operator`` for named A_vib families used in configs."""

    def ax(s):
        return annihilate(s, 1)

    def ay(s):
        return annihilate(s, 2)

    if kind == "pair":
        return lambda s: ax(s) @ ay(s)
    if kind == "pair_squared":
        return lambda s: (ax(s) @ ay(s)) ** 2
    if kind == "su11":
        a, b = p.get("vib_alpha", 1.0), p.get("vib_beta", 0.0)
        return lambda s: a * ax(s) @ ay(s) + b * create(s, 1) @ create(s, 2)
    if kind == "su2":
        return lambda s: ax(s) @ create(s, 2) + create(s, 1) @ ay(s)
    if kind == "quadratic":
        c1 = p.get("g1", 0.0) * np.exp(-1j * p.get("phi1", 0.0))
        c2 = p.get("g2", 0.0) * np.exp(-1j * p.get("phi2", 0.0))
        c0 = p.get("g0", 0.0) * np.exp(-1j * p.get("phi0", 0.0))
        return lambda s: -(c1 * ax(s) ** 2 + c2 * create(s, 1) ** 2 + 2 * c0 * number(s, 1))
    raise ValueError(f"unknown vibrational operator {kind!r}")
