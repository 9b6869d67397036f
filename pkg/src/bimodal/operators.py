"""Sparse operators on a :class:`HilbertSpace` and the elementary building blocks.

Ladder operators are truncated at the cutoff: ``a^dag |cutoff> = 0``.
Pseudospin operators follow ``2 S_z |+-> = +-|+->``, ``S_+ |-> = |+>``.
"""
from __future__ import annotations

import math
from functools import reduce

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .hilbert import HilbertSpace, joint_labels

HERMITIAN_TOL = 1e-12


class Operator:
    """Complex sparse matrix bound to a Hilbert space.

    Arithmetic follows the matrix conventions: ``A @ B`` is the product,
    ``A @ psi`` applies to an amplitude vector, ``A.dag`` is the adjoint.
    """

    __array_priority__ = 20

    def __init__(self, space: HilbertSpace, matrix):
        m = sp.csr_matrix(matrix, dtype=complex)
        if m.shape != (space.total_dim, space.total_dim):
            raise ValueError(f"matrix shape {m.shape} does not match space dimension {space.total_dim}")
        m.sum_duplicates()
        m.eliminate_zeros()
        self.space = space
        self.matrix = m

    @classmethod
    def from_entries(cls, space, entries):
        """Build from (row, col, value) triples; duplicates are summed."""
        if not entries:
            return cls.zero(space)
        rows, cols, vals = zip(*entries)
        n = space.total_dim
        for r, c in zip(rows, cols):
            if not (0 <= r < n and 0 <= c < n):
                raise IndexError(f"entry ({r}, {c}) outside dimension {n}")
        return cls(space, sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))

    @classmethod
    def zero(cls, space):
        return cls(space, sp.csr_matrix((space.total_dim, space.total_dim), dtype=complex))

    @classmethod
    def identity(cls, space):
        return cls(space, sp.identity(space.total_dim, dtype=complex, format="csr"))

    def _check(self, other):
        if other.space != self.space:
            raise ValueError(f"space mismatch: {self.space} vs {other.space}")

    def __add__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix + other.matrix)
        if np.isscalar(other):
            return self + other * Operator.identity(self.space)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1) * other

    def __rsub__(self, other):
        return (-1) * self + other

    def __neg__(self):
        return (-1) * self

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return Operator(self.space, self.matrix * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix @ other.matrix)
        return self.matrix @ np.asarray(other)

    def __pow__(self, k: int):
        if k == 0:
            return Operator.identity(self.space)
        return reduce(lambda x, y: x @ y, [self] * k)

    @property
    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    @property
    def entries(self) -> list[tuple[int, int, complex]]:
        m = self.matrix.tocoo()
        return list(zip(m.row.tolist(), m.col.tolist(), m.data.tolist()))

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def is_diagonal(self) -> bool:
        m = self.matrix.tocoo()
        return bool(np.all(m.row == m.col))

    def max_abs(self) -> float:
        return float(abs(self.matrix).max()) if self.matrix.nnz else 0.0

    def hermiticity_error(self) -> float:
        return (self - self.dag).max_abs()

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermiticity_error() <= tol

    def restrict(self, indices) -> np.ndarray:
        idx = np.asarray(indices)
        return self.matrix[idx][:, idx].toarray()

    def __repr__(self):
        return f"Operator(dim={self.space.total_dim}, nnz={self.matrix.nnz})"


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


# ---------------------------------------------------------------------------
# elementary operators


def _embed(space: HilbertSpace, atom=None, m1=None, m2=None) -> Operator:
    na, d1, d2 = space.dims
    factors = [
        sp.identity(na, format="csr") if atom is None else sp.csr_matrix(atom),
        sp.identity(d1, format="csr") if m1 is None else sp.csr_matrix(m1),
        sp.identity(d2, format="csr") if m2 is None else sp.csr_matrix(m2),
    ]
    return Operator(space, sp.kron(sp.kron(factors[0], factors[1]), factors[2], format="csr"))


def _ladder(dim: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, dim)), 1, shape=(dim, dim), format="csr", dtype=complex)


def _mode_slot(space, mode, single):
    if mode == 1:
        return _embed(space, m1=single)
    if mode == 2:
        return _embed(space, m2=single)
    raise ValueError(f"mode must be 1 or 2, got {mode!r}")


def mode_op(space: HilbertSpace, mode: int, kind: str) -> Operator:
    """Annihilation, creation or number operator of one bosonic mode."""
    dim = space.dims[mode] if mode in (1, 2) else None
    if dim is None:
        raise ValueError(f"mode must be 1 or 2, got {mode!r}")
    a = _ladder(dim)
    single = {"annihilate": a, "create": a.T.tocsr(), "number": sp.diags(np.arange(dim, dtype=complex))}
    if kind not in single:
        raise ValueError(f"unknown ladder kind {kind!r}")
    return _mode_slot(space, mode, single[kind])


def annihilate(space, mode):
    return mode_op(space, mode, "annihilate")


def create(space, mode):
    return mode_op(space, mode, "create")


def number(space, mode):
    return mode_op(space, mode, "number")


def spin_op(space: HilbertSpace, kind: str) -> Operator:
    """Pseudospin S_z, S_+ (= |+><-|) or S_- on a two-level atom."""
    if space.atom_dim != 2:
        raise ValueError(f"pseudospin needs a two-level atom, got atom_dim={space.atom_dim}")
    mats = {
        "Sz": np.diag([-0.5, 0.5]),
        "S+": np.array([[0, 0], [1, 0]]),
        "S-": np.array([[0, 1], [0, 0]]),
    }
    if kind not in mats:
        raise ValueError(f"unknown spin kind {kind!r}")
    return _embed(space, atom=mats[kind].astype(complex))


def projector_op(space: HilbertSpace, bra_level: int, ket_level: int) -> Operator:
    """|bra_level><ket_level| on the atom, identity on both modes."""
    for lv in (bra_level, ket_level):
        if not 0 <= lv < space.atom_dim:
            raise IndexError(f"atom level {lv} outside [0, {space.atom_dim - 1}]")
    m = np.zeros((space.atom_dim, space.atom_dim), dtype=complex)
    m[bra_level, ket_level] = 1.0
    return _embed(space, atom=m)


def schwinger(space: HilbertSpace, component: int) -> Operator:
    ax, ay = annihilate(space, 1), annihilate(space, 2)
    if component == 1:
        return (ax.dag @ ay + ay.dag @ ax) / 2
    if component == 2:
        return (ax.dag @ ay - ay.dag @ ax) / 2j
    if component == 3:
        return (number(space, 1) - number(space, 2)) / 2
    raise ValueError(f"Schwinger component must be 1, 2 or 3, got {component!r}")


def angular_momentum_z(space: HilbertSpace) -> Operator:
    """L_z = 2 J_2 = n_r - n_l."""
    return 2 * schwinger(space, 2)


def circular_ops(space: HilbertSpace) -> tuple[Operator, Operator]:
    """(a_r, a_l) with a_r = (a_x - i a_y)/sqrt2 and a_l = (a_x + i a_y)/sqrt2."""
    ax, ay = annihilate(space, 1), annihilate(space, 2)
    return (ax - 1j * ay) / math.sqrt(2), (ax + 1j * ay) / math.sqrt(2)


def parity(space: HilbertSpace, mode: int) -> Operator:
    dim = space.dims[mode]
    return _mode_slot(space, mode, sp.diags((-1.0) ** np.arange(dim)))


# ---------------------------------------------------------------------------
# Lamb-Dicke nonlinearities


def laguerre(n: int, k: float, x: float) -> float:
    """Generalized Laguerre L_n^(k)(x) by the three-term recurrence."""
    if n == 0:
        return 1.0
    prev, cur = 1.0, 1.0 + k - x
    for m in range(2, n + 1):
        prev, cur = cur, ((2 * m - 1 + k - x) * cur - (m - 1 + k) * prev) / m
    return cur


def _factorial_ratio(n: int, k: int) -> float:
    """n! / (n+k)!"""
    out = 1.0
    for j in range(n + 1, n + k + 1):
        out /= j
    return out


def f_k_values(n_max: int, k: int, eta: float) -> np.ndarray:
    """Diagonal <n|f_k(n, eta)|n> for n = 0..n_max.

    Summing the normal-ordered series in closed form gives
    ``exp(-eta^2/2) n!/(n+k)! L_n^(k)(eta^2)``.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    x = eta * eta
    pref = math.exp(-x / 2)
    return np.array([pref * _factorial_ratio(n, k) * laguerre(n, k, x) for n in range(n_max + 1)])


def f_k_operator(space: HilbertSpace, mode: int, k: int, eta: float) -> Operator:
    dim = space.dims[mode]
    return _mode_slot(space, mode, sp.diags(f_k_values(dim - 1, k, eta).astype(complex)))


def vibronic_rabi(n: int, k: int, eta: float, omega: complex) -> complex:
    """Coupling between |n> and |n+k> on the k-th red sideband."""
    if n < 0 or k < 0:
        raise ValueError("n and k must be >= 0")
    x = eta * eta
    return ((1j * eta) ** k * omega * math.exp(-x / 2)
            * math.sqrt(_factorial_ratio(n, k)) * laguerre(n, k, x))


def normal_ordered_kick_matrix(dim: int, eta: float, tol: float = 1e-14) -> np.ndarray:
    """Matrix elements <p| e^{i eta (a + a^dag)} |q> summed term by term.

    Terms (i eta)^(m+l)/(m! l!) a^dag^m a^l are accumulated by total order
    m + l until an order adds nothing above ``tol`` to any entry.
    """
    q = np.arange(dim)
    logfact = np.array([math.lgamma(j + 1) for j in range(2 * dim + 1)])
    out = np.zeros((dim, dim), dtype=complex)
    order = 0
    while True:
        contrib = np.zeros((dim, dim), dtype=complex)
        for l in range(0, order + 1):
            m = order - l
            if l >= dim or m >= dim:
                continue
            src = q[q >= l]
            dst = src - l + m
            keep = dst < dim
            src, dst = src[keep], dst[keep]
            # <dst| a^dag^m a^l |src> = sqrt(src!/(src-l)!) sqrt(dst!/(src-l)!)
            logamp = 0.5 * (logfact[src] + logfact[dst]) - logfact[src - l]
            coef = (1j * eta) ** order / (math.factorial(m) * math.factorial(l))
            contrib[dst, src] += coef * np.exp(logamp)
        out += contrib
        if order >= 2 * (dim - 1) or (order > 0 and np.max(np.abs(contrib)) * math.exp(-eta * eta / 2) <= tol):
            break
        order += 1
    return math.exp(-eta * eta / 2) * out


def kick_operator(space: HilbertSpace, mode: int, eta: float) -> Operator:
    """Momentum kick e^{i eta (a + a^dag)} from the normal-ordered expansion.

    Entries are the exact untruncated matrix elements, so the result is not
    unitary near the cutoff; see :func:`unitary_kick` for the truncated
    exponential.
    """
    dim = space.dims[mode]
    return _mode_slot(space, mode, normal_ordered_kick_matrix(dim, eta))


def unitary_kick(space: HilbertSpace, mode: int, eta: float) -> Operator:
    """exp(i eta x) with x = a + a^dag truncated first (exactly unitary)."""
    dim = space.dims[mode]
    a = _ladder(dim).toarray()
    return _mode_slot(space, mode, sla.expm(1j * eta * (a + a.T)))


# ---------------------------------------------------------------------------
# mode mixing


def mode_rotation(space: HilbertSpace, theta: float) -> Operator:
    """Real-space rotation of the x-y axes by ``theta``.

    U a_x^dag U^dag = cos(theta) a_x^dag + sin(theta) a_y^dag, so
    ``U |1,0> = cos|1,0> + sin|0,1>``.  U = exp(-2 i theta J_2) is assembled
    block by block over fixed n_x + n_y, where it is exact.
    """
    gen = -2j * theta * schwinger(space, 2)
    labels = space.labels
    blocks = joint_labels(space, [labels[:, 0], labels[:, 1] + labels[:, 2]])
    rows, cols, vals = [], [], []
    for idx in blocks:
        u = sla.expm(gen.restrict(idx))
        r, c = np.meshgrid(idx, idx, indexing="ij")
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(u.ravel())
    n = space.total_dim
    m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return Operator(space, m)


def quadrature_ops(space: HilbertSpace, phase1: float, phase2: float) -> tuple[Operator, Operator]:
    """Two-mode amplitude quadratures d1, d2 with [d1, d2] = i/2.

    ``phase_j`` stands for omega_j t of the interaction-picture amplitudes.
    """
    d1 = Operator.zero(space)
    d2 = Operator.zero(space)
    for mode, ph in ((1, phase1), (2, phase2)):
        a = annihilate(space, mode)
        e = np.exp(1j * ph)
        d1 = d1 + (a * e + a.dag * np.conj(e))
        d2 = d2 + (a * e - a.dag * np.conj(e))
    scale = 2 ** -1.5
    return d1 * scale, d2 * (scale / 1j)
