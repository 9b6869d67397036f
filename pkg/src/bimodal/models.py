"""Hamiltonian zoo: cavity-QED two-mode models and trapped-ion effective couplings.

All Hamiltonians use hbar = 1 with angular frequencies.  Every builder returns
a :class:`BuiltModel` carrying the Hamiltonian, its registered constants of
motion and the set of basis states that couple out of the truncated space.
"""
from __future__ import annotations

import ast
import math
import operator as _op
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .hilbert import HilbertSpace
from .operators import (
    Operator,
    annihilate,
    commutator,
    f_k_operator,
    number,
    projector_op,
    spin_op,
)

TAGS = (
    "JC", "Lambda3", "DegenerateOnePhoton", "Raman", "RamanStark", "NondegTwoPhoton",
    "IntensityDependent", "DegenerateTwoPhoton", "IonSideband1D", "Ion2D", "QndCoupler",
    "BimodalCatCoupler", "DarkState",
)

# required parameters per tag; optional ones carry defaults in _DEFAULTS
_REQUIRED = {
    "JC": ("omega", "omega0", "lam"),
    "Lambda3": ("g1", "g2"),
    "DegenerateOnePhoton": ("omega", "omega0", "g1", "g2"),
    "Raman": ("omega0", "omega1", "omega2", "g_R"),
    "RamanStark": ("omega1", "omega2", "g_R", "E1", "E3", "g1", "g2", "Delta"),
    "NondegTwoPhoton": ("omega0", "omega1", "omega2", "lam"),
    "IntensityDependent": ("omega0", "omega1", "omega2", "lam"),
    "DegenerateTwoPhoton": ("omega", "omega0"),
    "IonSideband1D": ("k", "eta", "Omega"),
    "Ion2D": ("m_x", "m_y", "eta_x", "eta_y", "Omega"),
    "QndCoupler": ("Omega_Lx", "Omega_Ly", "chi"),
    "BimodalCatCoupler": ("chi",),
    "DarkState": ("vib", "Omega"),
}

_DEFAULTS = {
    "DegenerateOnePhoton": {"phi1": 0.0, "phi2": 0.0},
    "NondegTwoPhoton": {"beta1": 0.0, "beta2": 0.0},
    "DegenerateTwoPhoton": {"s": 0.0, "r1": 0.0, "r2": 0.0, "lam1": 0.0, "lam2": 0.0, "g": 0.0},
    "IonSideband1D": {"epsilon": 1, "regime": "full"},
    "Ion2D": {"Phi": 0.0, "epsilon": 1, "regime": "full"},
    "DarkState": {"eigenvalue": 0.0, "lowering": False},
}

# ion models are derived in the interaction picture, CQED models are full Hamiltonians
_ION_TAGS = {"IonSideband1D", "Ion2D", "QndCoupler", "BimodalCatCoupler", "DarkState"}


class MissingParameter(KeyError):
    pass


@dataclass
class ModelSpec:
    tag: str
    params: dict = field(default_factory=dict)
    interaction_picture: bool | None = None
    F: Callable | None = None
    G: Callable | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown model tag {self.tag!r}; expected one of {TAGS}")
        merged = dict(_DEFAULTS.get(self.tag, {}))
        merged.update(self.params)
        self.params = merged
        if self.interaction_picture is None:
            self.interaction_picture = self.tag in _ION_TAGS
        eps = self.params.get("epsilon", 1)
        if eps not in (0, 1):
            raise ValueError(f"epsilon must be 0 or 1, got {eps!r}")
        for name, value in self.params.items():
            if name.startswith(("omega", "Omega_L", "nu")) and np.iscomplexobj(value) and np.imag(value) != 0:
                raise ValueError(f"frequency {name} must be real, got {value!r}")

    def require(self):
        missing = [p for p in _REQUIRED[self.tag] if p not in self.params]
        if missing:
            raise MissingParameter(f"model {self.tag} is missing parameter(s): {', '.join(missing)}")
        return self.params

    def to_dict(self) -> dict:
        out = {"tag": self.tag, "params": _jsonable(self.params), "interaction_picture": self.interaction_picture}
        for name in ("F", "G"):
            fn = getattr(self, name)
            if fn is not None:
                out[name] = getattr(fn, "source", repr(fn))
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        allowed = {"tag", "params", "interaction_picture", "F", "G"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown model keys: {sorted(unknown)}")
        params = {k: _complex_from(v) for k, v in dict(data.get("params", {})).items()}
        funcs = {name: number_function(data[name]) for name in ("F", "G") if name in data}
        return cls(data["tag"], params, data.get("interaction_picture"), **funcs)


def _complex_from(v):
    if isinstance(v, dict) and set(v) == {"re", "im"}:
        return complex(v["re"], v["im"])
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    return v


def _jsonable(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        if isinstance(v, complex) or np.iscomplexobj(v):
            out[k] = {"re": float(np.real(v)), "im": float(np.imag(v))}
        elif isinstance(v, np.generic):
            out[k] = v.item()
        else:
            out[k] = v
    return out


# ---------------------------------------------------------------------------
# number-diagonal functions F(n1, n2), G(n1, n2) from config expressions

_BINOPS = {ast.Add: _op.add, ast.Sub: _op.sub, ast.Mult: _op.mul, ast.Div: _op.truediv, ast.Pow: _op.pow}
_FUNCS = {"sqrt": np.sqrt, "exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos, "abs": np.abs}


def number_function(expr: str) -> Callable:
    """Compile an arithmetic expression in n1, n2 (e.g. ``"sqrt(n1 + 1)"``)."""
    tree = ast.parse(expr, mode="eval")

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name) and node.id in env:
            return env[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = ev(node.operand, env)
            return -val if isinstance(node.op, ast.USub) else val
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS
                and not node.keywords):
            return _FUNCS[node.func.id](*[ev(a, env) for a in node.args])
        raise ValueError(f"unsupported element in number function {expr!r}: {ast.dump(node)}")

    def fn(n1, n2):
        return ev(tree, {"n1": np.asarray(n1, dtype=float), "n2": np.asarray(n2, dtype=float)}) + 0 * np.asarray(n1)

    fn.source = expr
    return fn


def _number_diag(space: HilbertSpace, func: Callable) -> Operator:
    lab = space.labels
    vals = np.asarray(func(lab[:, 1], lab[:, 2]), dtype=complex)
    return Operator(space, sp.diags(vals))


# ---------------------------------------------------------------------------


@dataclass
class BuiltModel:
    tag: str
    space: HilbertSpace
    hamiltonian: Operator
    conserved: list[tuple[str, Operator]]
    max_change: tuple[int, int] = (1, 1)
    boundary: np.ndarray | None = None
    spec: ModelSpec | None = None

    def __post_init__(self):
        err = self.hamiltonian.hermiticity_error()
        if err > 1e-12:
            raise ValueError(f"{self.tag} Hamiltonian is not Hermitian (error {err:.3e})")
        if self.boundary is None:
            self.boundary = conservative_boundary(self.space, self.max_change)

    def interior(self) -> np.ndarray:
        """Indices whose occupations stay max_change below both cutoffs."""
        lab = self.space.labels
        d1, d2 = self.max_change
        ok = (lab[:, 1] <= self.space.cutoff1 - d1) & (lab[:, 2] <= self.space.cutoff2 - d2)
        return np.flatnonzero(ok)

    def conserved_residuals(self) -> dict[str, float]:
        """max |[H, K]| on the interior block for each registered constant."""
        idx = self.interior()
        out = {}
        for name, k in self.conserved:
            c = commutator(self.hamiltonian, k)
            out[name] = float(np.max(np.abs(c.restrict(idx)))) if len(idx) else 0.0
        return out

    def leaked_norm(self, psi: np.ndarray) -> float:
        psi = np.asarray(psi)
        if psi.ndim == 1:
            return float(np.sum(np.abs(psi[self.boundary]) ** 2))
        # density matrix: population on boundary states
        return float(np.real(np.sum(np.diagonal(psi)[self.boundary])))


def conservative_boundary(space: HilbertSpace, max_change) -> np.ndarray:
    lab = space.labels
    d1, d2 = max_change
    return (lab[:, 1] > space.cutoff1 - d1) | (lab[:, 2] > space.cutoff2 - d2)


def exact_boundary(builder: Callable[[HilbertSpace], Operator], space: HilbertSpace, max_change) -> np.ndarray:
    """States of ``space`` coupled by H to occupations beyond the cutoffs.

    The Hamiltonian is rebuilt on a space grown by ``max_change`` per mode;
    a state is on the boundary when some matrix element connects it to a
    state that the truncation discards.
    """
    d1, d2 = max_change
    big = space.grow(d1, d2)
    h = builder(big).matrix.tocsc()
    lab = space.labels
    emb = np.ravel_multi_index((lab[:, 0], lab[:, 1], lab[:, 2]), big.dims)
    blab = big.labels
    outside = (blab[:, 1] > space.cutoff1) | (blab[:, 2] > space.cutoff2)
    coupling = abs(h[outside][:, emb])
    return np.asarray(coupling.sum(axis=0)).ravel() > 0


def _model(tag, space, builder, conserved_builders, max_change, spec=None) -> BuiltModel:
    h = builder(space)
    conserved = [(name, fn(space)) for name, fn in conserved_builders]
    return BuiltModel(tag, space, h, conserved, tuple(max_change),
                      exact_boundary(builder, space, max_change), spec)


def _hc(op: Operator) -> Operator:
    return op + op.dag


def _require_two_level(space, tag):
    if space.atom_dim != 2:
        raise ValueError(f"{tag} needs a two-level atom, got atom_dim={space.atom_dim}")


def _excited(space):
    return projector_op(space, 1, 1)


# ---------------------------------------------------------------------------
# CQED models


def _cqed_parts(spec: ModelSpec, space: HilbertSpace):
    """(full Hamiltonian builder, rotating-frame generator builder, constants, max change)."""
    p = spec.require()
    tag = spec.tag
    if tag == "Lambda3":
        if space.atom_dim != 3:
            raise ValueError(f"Lambda3 needs a three-level atom, got atom_dim={space.atom_dim}")
    else:
        _require_two_level(space, tag)

    def n(s, mu):
        return number(s, mu)

    def a(s, mu):
        return annihilate(s, mu)

    if tag == "JC":
        def H(s):
            return (p["omega0"] * spin_op(s, "Sz") + p["omega"] * n(s, 1)
                    + _hc(p["lam"] * a(s, 1).dag @ spin_op(s, "S-")))

        def frame(s):
            return p["omega"] * (n(s, 1) + spin_op(s, "Sz"))
        consts = [("N", lambda s: n(s, 1) + spin_op(s, "Sz") + 0.5)]
        return H, frame, consts, (1, 0)

    if tag == "Lambda3":
        def H(s):
            return (_hc(p["g1"] * a(s, 1).dag @ projector_op(s, 0, 1))
                    + _hc(p["g2"] * a(s, 2).dag @ projector_op(s, 2, 1)))
        consts = [
            ("N", lambda s: n(s, 1) + n(s, 2) + projector_op(s, 1, 1)),
            ("M1", lambda s: n(s, 1) + projector_op(s, 1, 1) + projector_op(s, 2, 2)),
            ("M2", lambda s: n(s, 2) + projector_op(s, 1, 1) + projector_op(s, 0, 0)),
        ]
        return H, None, consts, (1, 1)

    if tag == "DegenerateOnePhoton":
        g1, g2 = p["g1"], p["g2"]

        def H(s):
            out = p["omega"] * (n(s, 1) + n(s, 2)) + p["omega0"] * spin_op(s, "Sz")
            for mu, g, phi in ((1, g1, p["phi1"]), (2, g2, p["phi2"])):
                out = out + _hc(g * np.exp(-1j * phi) * a(s, mu).dag @ spin_op(s, "S-"))
            return out

        def frame(s):
            return p["omega"] * (n(s, 1) + n(s, 2) + spin_op(s, "Sz"))

        def C(s):
            norm = g1 ** 2 + g2 ** 2
            mix = a(s, 1).dag @ a(s, 2) * np.exp(1j * (p["phi2"] - p["phi1"]))
            return (g2 ** 2 / norm) * n(s, 1) + (g1 ** 2 / norm) * n(s, 2) - (g1 * g2 / norm) * _hc(mix)
        consts = [("N", lambda s: n(s, 1) + n(s, 2) + spin_op(s, "Sz") + 0.5), ("C", C)]
        return H, frame, consts, (1, 1)

    if tag in ("Raman", "RamanStark"):
        def H(s):
            out = p["omega1"] * n(s, 1) + p["omega2"] * n(s, 2)
            if tag == "Raman":
                out = out + p["omega0"] * spin_op(s, "Sz")
            else:
                up, down = projector_op(s, 1, 1), projector_op(s, 0, 0)
                out = (out + (p["E3"] * up + (p["g2"] ** 2 / p["Delta"]) * n(s, 2) @ up)
                       + (p["E1"] * down + (p["g1"] ** 2 / p["Delta"]) * n(s, 1) @ down))
            return out + _hc(p["g_R"] * a(s, 1) @ a(s, 2).dag @ spin_op(s, "S+"))

        def frame(s):
            return (p["omega1"] * n(s, 1) + p["omega2"] * n(s, 2)
                    + (p["omega1"] - p["omega2"]) * spin_op(s, "Sz"))
        consts = [("N", lambda s: n(s, 1) + n(s, 2)), ("M", lambda s: n(s, 1) + spin_op(s, "Sz"))]
        return H, frame, consts, (1, 1)

    if tag in ("NondegTwoPhoton", "IntensityDependent"):
        def H(s):
            out = p["omega1"] * n(s, 1) + p["omega2"] * n(s, 2)
            if tag == "NondegTwoPhoton":
                det = p["omega0"] + p["beta2"] * n(s, 2) - p["beta1"] * n(s, 1)
                return (out + det @ spin_op(s, "Sz")
                        + _hc(p["lam"] * a(s, 1) @ a(s, 2) @ spin_op(s, "S+")))
            G = _number_diag(s, spec.G) if spec.G is not None else Operator.identity(s)
            F = _number_diag(s, spec.F) if spec.F is not None else Operator.identity(s)
            return (out + p["omega0"] * G @ spin_op(s, "Sz")
                    + _hc(p["lam"] * a(s, 1) @ a(s, 2) @ F @ spin_op(s, "S+")))

        def frame(s):
            return (p["omega1"] * n(s, 1) + p["omega2"] * n(s, 2)
                    + (p["omega1"] + p["omega2"]) * spin_op(s, "Sz"))
        consts = [("N", lambda s: n(s, 1) + n(s, 2) + 2 * spin_op(s, "Sz") + 1),
                  ("D", lambda s: n(s, 1) - n(s, 2))]
        return H, frame, consts, (1, 1)

    if tag == "DegenerateTwoPhoton":
        def H(s):
            sz = spin_op(s, "Sz")
            ntot = n(s, 1) + n(s, 2)
            mix = a(s, 1) @ a(s, 2).dag
            coupling = p["lam1"] * a(s, 1) ** 2 + p["lam2"] * a(s, 2) ** 2 + p["g"] * a(s, 1) @ a(s, 2)
            return (p["omega0"] * sz + p["omega"] * ntot + p["s"] * sz @ ntot
                    + _hc(p["r1"] * mix + p["r2"] * mix @ sz) + _hc(coupling @ spin_op(s, "S+")))

        def frame(s):
            return p["omega"] * (n(s, 1) + n(s, 2) + 2 * spin_op(s, "Sz"))
        consts = [("N", lambda s: n(s, 1) + n(s, 2) + 2 * spin_op(s, "Sz") + 1)]
        real_r = np.isreal(p["r1"]) and np.isreal(p["r2"])
        if p["g"] == 0 and p["lam1"] == -p["lam2"] and real_r:
            consts.append(("C", lambda s: _hc(a(s, 1).dag @ a(s, 2))))
        return H, frame, consts, (2, 2)

    raise ValueError(f"{tag} is not a cavity model")


def build_model(spec: ModelSpec, space: HilbertSpace) -> BuiltModel:
    """Build the Hamiltonian described by ``spec`` on ``space``."""
    tag = spec.tag
    p = spec.require()
    if tag == "Ion2D":
        return ion_effective(p["m_x"], p["m_y"], p["eta_x"], p["eta_y"], p["Omega"], p["Phi"],
                             p["epsilon"], p["regime"], space)
    if tag == "IonSideband1D":
        return ion_sideband_1d(p["k"], p["eta"], p["Omega"], p["epsilon"], p["regime"], space)
    if tag == "QndCoupler":
        return qnd_model(p["Omega_Lx"], p["Omega_Ly"], p["chi"], space)
    if tag == "BimodalCatCoupler":
        return bimodal_cat_model(p["chi"], space)
    if tag == "DarkState":
        from .lindblad import vibrational_operator  # late import: lindblad depends on models
        vib = vibrational_operator(p["vib"], p)
        return dark_hamiltonian(vib, p["eigenvalue"], p["Omega"], space, lowering=p["lowering"])

    H, frame, consts, dmax = _cqed_parts(spec, space)
    if spec.interaction_picture and frame is not None:
        def builder(s):
            return H(s) - frame(s)
    else:
        builder = H
    model = _model(tag, space, builder, consts, dmax, spec)
    return model


def parity_preset(lam: float = 1.0, omega: float = 0.0, omega0: float = 0.0, **extra) -> ModelSpec:
    """Degenerate two-photon model with g = 0 and lam1 = -lam2 = lam."""
    params = {"omega": omega, "omega0": omega0, "lam1": lam, "lam2": -lam, "g": 0.0}
    params.update(extra)
    return ModelSpec("DegenerateTwoPhoton", params)


# ---------------------------------------------------------------------------
# trapped-ion models


def _g_factor(s: HilbertSpace, mode: int, m: int, eta: float, regime: str) -> Operator:
    """g_m(a^dag, a, eta): creation side for m >= 0, annihilation side for m < 0."""
    a = annihilate(s, mode)
    k = abs(m)
    if regime == "lamb_dicke":
        return a.dag ** k if m >= 0 else a ** k
    f = f_k_operator(s, mode, k, eta)
    if m >= 0:
        return ((1j * eta) * a.dag) ** k @ f
    return f @ ((1j * eta) * a) ** k


def ion_effective(m_x: int, m_y: int, eta_x: float, eta_y: float, omega: complex, phase: float,
                  epsilon: int, regime: str, space: HilbertSpace) -> BuiltModel:
    """Two-dimensional sideband Hamiltonian in the interaction picture.

    ``regime="full"`` keeps the Laguerre nonlinearities f_|m|; ``"lamb_dicke"``
    uses bare ladder monomials with Omega' = Omega (i eta_x)^|m_x| (i eta_y)^|m_y|.
    The laser phase factor e^{i Phi} multiplies both regimes.
    """
    if regime not in ("full", "lamb_dicke"):
        raise ValueError(f"regime must be 'full' or 'lamb_dicke', got {regime!r}")
    if epsilon not in (0, 1):
        raise ValueError("epsilon must be 0 or 1")
    m_x, m_y = int(m_x), int(m_y)
    if abs(m_x) > space.cutoff1 or abs(m_y) > space.cutoff2:
        raise ValueError(f"|m_x|,|m_y| must not exceed the cutoffs, got ({m_x}, {m_y})")
    if epsilon == 1:
        _require_two_level(space, "Ion2D")
    pref = omega * np.exp(1j * phase)
    if regime == "lamb_dicke":
        pref = pref * (1j * eta_x) ** abs(m_x) * (1j * eta_y) ** abs(m_y)

    def H(s):
        core = _g_factor(s, 1, m_x, eta_x, regime) @ _g_factor(s, 2, m_y, eta_y, regime)
        if epsilon == 1:
            core = core @ spin_op(s, "S+")
        return _hc(pref * core)

    consts = []
    if epsilon == 1:
        consts = [("Kx", lambda s: number(s, 1) - m_x * _excited(s)),
                  ("Ky", lambda s: number(s, 2) - m_y * _excited(s))]
    elif (m_x, m_y) != (0, 0):
        consts = [("K", lambda s: m_y * number(s, 1) - m_x * number(s, 2))]
    return _model("Ion2D", space, H, consts, (max(abs(m_x), 1), max(abs(m_y), 1)))


def ion_sideband_1d(k: int, eta: float, omega: complex, epsilon: int, regime: str,
                    space: HilbertSpace) -> BuiltModel:
    """Nonlinear k-quantum JC coupling of mode 1 (red sideband for k > 0)."""
    k = int(k)
    if regime not in ("full", "lamb_dicke"):
        raise ValueError(f"regime must be 'full' or 'lamb_dicke', got {regime!r}")
    if epsilon == 1:
        _require_two_level(space, "IonSideband1D")

    def H(s):
        a = annihilate(s, 1)
        if regime == "lamb_dicke":
            core = (1j * eta * a) ** k if k >= 0 else (1j * eta * a.dag) ** (-k)
        elif k >= 0:
            core = f_k_operator(s, 1, k, eta) @ (1j * eta * a) ** k
        else:
            core = (1j * eta * a.dag) ** (-k) @ f_k_operator(s, 1, -k, eta)
        if epsilon == 1:
            core = spin_op(s, "S+") @ core
        return _hc(omega * core)

    consts = [("K", lambda s: number(s, 1) + k * _excited(s))] if epsilon == 1 else []
    return _model("IonSideband1D", space, H, consts, (max(abs(k), 1), 0))


def qnd_model(omega_lx: float, omega_ly: float, chi: float, space: HilbertSpace) -> BuiltModel:
    """|Omega_Lx - Omega_Ly - chi Q| sigma_+ + h.c. with Q = n_x - n_y."""
    if omega_lx == omega_ly:
        raise ValueError("degenerate drive: Omega_Lx must differ from Omega_Ly")
    _require_two_level(space, "QndCoupler")

    def H(s):
        lab = s.labels
        # |.| of a Fock-diagonal operator acts on its eigenvalues
        freq = np.abs(omega_lx - omega_ly - chi * (lab[:, 1] - lab[:, 2]))
        return _hc(Operator(s, sp.diags(freq.astype(complex))) @ spin_op(s, "S+"))

    consts = [("Q", lambda s: number(s, 1) - number(s, 2)),
              ("nx", lambda s: number(s, 1)), ("ny", lambda s: number(s, 2))]
    return _model("QndCoupler", space, H, consts, (1, 1))


def qnd_rabi_frequency(omega_lx, omega_ly, chi, q):
    return abs(omega_lx - omega_ly - chi * q)


def bimodal_cat_model(chi: float, space: HilbertSpace) -> BuiltModel:
    """-chi (n_x - n_y)(sigma_+ + sigma_-): equal-drive limit of the QND coupler."""
    _require_two_level(space, "BimodalCatCoupler")

    def H(s):
        q = number(s, 1) - number(s, 2)
        return -chi * q @ (spin_op(s, "S+") + spin_op(s, "S-"))

    consts = [("Q", lambda s: number(s, 1) - number(s, 2)),
              ("nx", lambda s: number(s, 1)), ("ny", lambda s: number(s, 2))]
    return _model("BimodalCatCoupler", space, H, consts, (1, 1))


def dark_hamiltonian(a_vib, eigenvalue: complex, omega: float, space: HilbertSpace,
                     lowering: bool = False) -> BuiltModel:
    """Omega (A_vib - eigenvalue) sigma_+ + h.c.

    With ``lowering=True`` sigma_- replaces sigma_+.  ``a_vib`` is either an
    Operator acting on the modes or a callable ``space -> Operator``; the
    callable form allows an exact truncation boundary.
    """
    _require_two_level(space, "DarkState")
    builder_vib = a_vib if callable(a_vib) and not isinstance(a_vib, Operator) else None
    vib = builder_vib(space) if builder_vib else a_vib
    if vib.space != space:
        raise ValueError("A_vib acts on a different space")
    atom_part = vib.matrix.tocoo()
    lab = space.labels
    if np.any(lab[atom_part.row, 0] != lab[atom_part.col, 0]):
        raise ValueError("A_vib must act on the motional modes only")
    dn1 = np.abs(lab[atom_part.row, 1] - lab[atom_part.col, 1])
    dn2 = np.abs(lab[atom_part.row, 2] - lab[atom_part.col, 2])
    dmax = (int(dn1.max(initial=0)) or 1, int(dn2.max(initial=0)) or 1)
    flip = "S-" if lowering else "S+"

    def H_from(v, s):
        return _hc(omega * (v - eigenvalue) @ spin_op(s, flip))

    consts = []
    Q = number(space, 1) - number(space, 2)
    if commutator(vib, Q).max_abs() < 1e-12:
        consts.append(("Q", lambda s: number(s, 1) - number(s, 2)))
    if builder_vib is not None:
        return _model("DarkState", space, lambda s: H_from(builder_vib(s), s), consts, dmax)
    h = H_from(vib, space)
    return BuiltModel("DarkState", space, h, [(n_, f(space)) for n_, f in consts], dmax)


# ---------------------------------------------------------------------------


@dataclass
class TrapCheck:
    valid: bool
    residual: float
    commensurate: bool
    ratio: Fraction | None
    warnings: list[str]

    def __bool__(self):
        return self.valid


def validate_trap(nu_x: float, nu_y: float, nu_z: float, max_denominator: int = 12) -> TrapCheck:
    """Check nu_x + nu_y = nu_z for a quadrupole trap and flag commensurate radial frequencies."""
    if min(nu_x, nu_y, nu_z) <= 0:
        raise ValueError("trap frequencies must be positive")
    residual = abs(nu_x + nu_y - nu_z)
    valid = residual <= 1e-9 * nu_z
    warnings = []
    if not valid:
        warnings.append(f"nu_x + nu_y - nu_z = {nu_x + nu_y - nu_z:.6g} violates the quadrupole relation")
    ratio = Fraction(nu_x / nu_y).limit_denominator(max_denominator)
    commensurate = math.isclose(ratio.numerator / ratio.denominator, nu_x / nu_y, rel_tol=1e-9)
    if commensurate:
        kind = "isotropic" if ratio == 1 else f"commensurate ({ratio})"
        warnings.append(f"{kind} radial frequencies: extra resonant terms may appear")
    return TrapCheck(valid, residual, commensurate, ratio if commensurate else None, warnings)


def ion_parity_model(space: HilbertSpace, omega_prime: float = 1.0) -> BuiltModel:
    """Omega' (a_x a_y sigma_+ + h.c.): Lamb-Dicke sideband (m_x, m_y) = (-1, -1).

    With eta_x = eta_y = 1 the Lamb-Dicke prefactor is Omega (i)^2, so
    Omega = -Omega' gives the stated effective coupling.
    """
    return ion_effective(-1, -1, 1.0, 1.0, -omega_prime, 0.0, 1, "lamb_dicke", space)
