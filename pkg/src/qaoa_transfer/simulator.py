"""Exact statevector simulation of the MaxCut QAOA ansatz.

Basis ordering is little-endian: qubit ``q`` is bit ``q`` of the basis index.
Each layer applies the cost phase ``exp(-i gamma C)`` first and then the
mixer ``exp(-i beta X)`` on every qubit.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np

from .graphgen import Graph

MAX_TABLE_QUBITS = 26
FD_STEP = 1e-5
# bytes of cached intermediate states the gradient may hold
PREFIX_CACHE_BYTES = 1 << 30
# cut tables with at most this many distinct values use a phase lookup
_MAX_LEVELS = 4096


@dataclass(frozen=True, eq=False)
class CutTable:
    n: int
    values: np.ndarray

    @cached_property
    def levels(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Distinct cut values and per-state indices, when there are few of them."""
        lv, idx = np.unique(self.values, return_inverse=True)
        if lv.size > _MAX_LEVELS:
            return None
        return lv, idx.astype(np.int32)

    def _kernel_args(self):
        lv = self.levels
        if lv is None:
            return self.values, np.zeros(1, np.int32), np.zeros(1), False
        return self.values, lv[1], lv[0], True


@dataclass
class Statevector:
    n: int
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True, eq=False)
class QaoaParams:
    gammas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        g = np.array(self.gammas, dtype=np.float64).ravel()
        b = np.array(self.betas, dtype=np.float64).ravel()
        if g.size == 0 or g.size != b.size:
            raise ValueError(f"need equal non-empty gamma/beta arrays, got {g.size} and {b.size}")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(b))):
            raise ValueError("QAOA parameters must be finite")
        g.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "betas", b)

    @property
    def p(self) -> int:
        return self.gammas.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.gammas, self.betas])

    @classmethod
    def from_vector(cls, theta) -> "QaoaParams":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.ndim != 1 or theta.size % 2:
            raise ValueError("parameter vector must have even length 2p")
        p = theta.size // 2
        return cls(theta[:p], theta[p:])

    def __eq__(self, other):
        if not isinstance(other, QaoaParams):
            return NotImplemented
        return np.array_equal(self.gammas, other.gammas) and np.array_equal(self.betas, other.betas)

    def __repr__(self):
        return f"QaoaParams(p={self.p}, gammas={self.gammas.tolist()}, betas={self.betas.tolist()})"


# -- kernels ----------------------------------------------------------------

@numba.njit(cache=True)
def _cost(psi, values, index, levels, use_levels, gamma):
    if use_levels:
        k = levels.shape[0]
        ph = np.empty(k, dtype=np.complex128)
        for j in range(k):
            ph[j] = complex(np.cos(gamma * levels[j]), -np.sin(gamma * levels[j]))
        for i in range(psi.shape[0]):
            psi[i] *= ph[index[i]]
    else:
        for i in range(psi.shape[0]):
            a = gamma * values[i]
            psi[i] *= complex(np.cos(a), -np.sin(a))


@numba.njit(cache=True)
def _mixer(psi, n, beta):
    c = np.cos(beta)
    ms = complex(0.0, -np.sin(beta))
    dim = psi.shape[0]
    for q in range(n):
        st = 1 << q
        for base in range(0, dim, st << 1):
            for i in range(base, base + st):
                a0 = psi[i]
                a1 = psi[i + st]
                psi[i] = c * a0 + ms * a1
                psi[i + st] = ms * a0 + c * a1


@numba.njit(cache=True)
def _expect(psi, values):
    acc = 0.0
    for i in range(psi.shape[0]):
        acc += (psi[i].real * psi[i].real + psi[i].imag * psi[i].imag) * values[i]
    return acc


@numba.njit(cache=True)
def _evolve(psi, n, values, index, levels, use_levels, gammas, betas, start):
    for j in range(start, gammas.shape[0]):
        _cost(psi, values, index, levels, use_levels, gammas[j])
        _mixer(psi, n, betas[j])


@numba.njit(cache=True)
def _fd_gradient(n, values, index, levels, use_levels, gammas, betas, mask, h, cache_prefix):
    p = gammas.shape[0]
    dim = 1 << n
    grad = np.zeros(2 * p)
    plus = np.full(dim, 1.0 / np.sqrt(dim) + 0j)

    # prefix[j] is the state entering layer j; only kept when affordable
    nkeep = p if cache_prefix else 0
    prefix = np.empty((nkeep, dim), dtype=np.complex128)
    psi = plus.copy()
    for j in range(p):
        if cache_prefix:
            prefix[j, :] = psi
        _cost(psi, values, index, levels, use_levels, gammas[j])
        _mixer(psi, n, betas[j])
    e0 = _expect(psi, values)

    g = gammas.copy()
    b = betas.copy()
    work = np.empty(dim, dtype=np.complex128)
    for j in range(p):
        for which in range(2):
            coord = j if which == 0 else p + j
            if not mask[coord]:
                continue
            vals = np.zeros(2)
            for s in range(2):
                delta = h if s == 0 else -h
                if which == 0:
                    g[j] = gammas[j] + delta
                else:
                    b[j] = betas[j] + delta
                if cache_prefix:
                    work[:] = prefix[j]
                    _evolve(work, n, values, index, levels, use_levels, g, b, j)
                else:
                    work[:] = plus
                    _evolve(work, n, values, index, levels, use_levels, g, b, 0)
                vals[s] = _expect(work, values)
            g[j] = gammas[j]
            b[j] = betas[j]
            grad[coord] = (vals[0] - vals[1]) / (2.0 * h)
    return grad, e0


# -- public API -------------------------------------------------------------

def build_cut_table(g: Graph) -> CutTable:
    """Cut value of every basis state; this is the diagonal of the cost Hamiltonian."""
    if g.n > MAX_TABLE_QUBITS:
        raise ValueError(f"cut table refused for n={g.n} > {MAX_TABLE_QUBITS} qubits")
    z = np.arange(1 << g.n, dtype=np.int64)
    values = np.zeros(1 << g.n)
    for u, v, w in g.edges:
        values += w * (((z >> u) ^ (z >> v)) & 1)
    values.flags.writeable = False
    return CutTable(g.n, values)


def prepare_plus_state(n: int) -> Statevector:
    dim = 1 << n
    return Statevector(n, np.full(dim, 1.0 / np.sqrt(dim), dtype=np.complex128))


def apply_cost_layer(s: Statevector, t: CutTable, gamma: float) -> None:
    if s.n != t.n:
        raise ValueError(f"state has {s.n} qubits, cut table has {t.n}")
    values, index, levels, use_levels = t._kernel_args()
    _cost(s.amplitudes, values, index, levels, use_levels, float(gamma))


def apply_mixer_layer(s: Statevector, beta: float) -> None:
    _mixer(s.amplitudes, s.n, float(beta))


def run_ansatz(t: CutTable, params: QaoaParams, start: Statevector | None = None,
               first_layer: int = 0) -> Statevector:
    """Prepare the depth-p QAOA state.

    ``start``/``first_layer`` resume from a state that already went through
    layers ``0..first_layer-1``.
    """
    if start is None:
        s = prepare_plus_state(t.n)
        first_layer = 0
    else:
        if start.n != t.n:
            raise ValueError(f"state has {start.n} qubits, cut table has {t.n}")
        s = Statevector(start.n, start.amplitudes.copy())
    values, index, levels, use_levels = t._kernel_args()
    _evolve(s.amplitudes, t.n, values, index, levels, use_levels,
            params.gammas, params.betas, first_layer)
    return s


def expectation(s: Statevector, t: CutTable) -> float:
    if s.n != t.n:
        raise ValueError(f"state has {s.n} qubits, cut table has {t.n}")
    return float(_expect(s.amplitudes, t.values))


def approximation_ratio(exp_val: float, c_max: float) -> float:
    if c_max <= 0:
        raise ValueError(f"approximation ratio undefined for c_max={c_max} <= 0")
    return exp_val / c_max


def qaoa_expectation(t: CutTable, params: QaoaParams) -> float:
    return expectation(run_ansatz(t, params), t)


def gradient(t: CutTable, params: QaoaParams, mask=None, h: float = FD_STEP,
             return_value: bool = False):
    """Central finite-difference gradient of the expectation.

    Coordinates follow ``(gamma_0..gamma_{p-1}, beta_0..beta_{p-1})``;
    unselected coordinates are reported as exactly 0.  With
    ``return_value`` the expectation at ``params`` comes back as well.
    """
    p = params.p
    mask = np.ones(2 * p, dtype=np.bool_) if mask is None else np.asarray(mask, dtype=np.bool_)
    if mask.shape != (2 * p,):
        raise ValueError(f"mask must have length {2 * p}")
    values, index, levels, use_levels = t._kernel_args()
    cache = p * (1 << t.n) * 16 <= PREFIX_CACHE_BYTES
    grad, e0 = _fd_gradient(t.n, values, index, levels, use_levels,
                            params.gammas, params.betas, mask, float(h), cache)
    if return_value:
        return grad, float(e0)
    return grad
