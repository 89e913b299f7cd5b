"""Regularized QAOA objective and the optimizers that minimize it.

Every optimizer minimizes ``-<H_C> + lam * R(theta)`` over the coordinates
selected by a boolean mask laid out as ``(gamma_0..gamma_{p-1},
beta_0..beta_{p-1})``.  Unselected coordinates are never written.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .simulator import (
    CutTable,
    QaoaParams,
    Statevector,
    expectation,
    gradient as fd_gradient,
    run_ansatz,
)

REG_KINDS = ("none", "l1", "l2", "smooth")


class OptimizationError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class Regularizer:
    kind: str = "none"
    lam: float = 0.0

    def __post_init__(self):
        kind = self.kind.lower()
        if kind == "sm":
            kind = "smooth"
        if kind not in REG_KINDS:
            raise ValueError(f"unknown regularizer {self.kind!r}")
        if self.lam < 0:
            raise ValueError("regularization strength must be >= 0")
        object.__setattr__(self, "kind", kind)

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.lam > 0


def full_mask(p: int) -> np.ndarray:
    return np.ones(2 * p, dtype=bool)


def layer_mask(p: int, k: int) -> np.ndarray:
    """Mask selecting layer ``k`` (1-based, as reported to users)."""
    if not 1 <= k <= p:
        raise ValueError(f"layer {k} outside 1..{p}")
    m = np.zeros(2 * p, dtype=bool)
    m[k - 1] = m[p + k - 1] = True
    return m


def _check_mask(mask, size: int) -> np.ndarray:
    mask = np.ones(size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != (size,):
        raise ValueError(f"mask has shape {mask.shape}, expected ({size},)")
    if not mask.any():
        raise ValueError("mask selects no coordinates")
    return mask


# -- regularizers -----------------------------------------------------------

def _smooth_pairs(p: int, mask: np.ndarray) -> np.ndarray:
    # adjacent (i, i+1) pairs within the gamma and beta halves that touch a
    # selected coordinate; pairs between two fixed values are constants
    lo = np.concatenate([np.arange(p - 1), p + np.arange(p - 1)])
    hi = lo + 1
    keep = mask[lo] | mask[hi]
    return np.stack([lo[keep], hi[keep]])


def penalty(theta: np.ndarray, kind: str, mask: np.ndarray) -> float:
    if kind == "none":
        return 0.0
    if kind == "l1":
        return float(np.sum(np.abs(theta[mask])))
    if kind == "l2":
        return float(np.sum(theta[mask] ** 2))
    lo, hi = _smooth_pairs(theta.size // 2, mask)
    return float(np.sum((theta[hi] - theta[lo]) ** 2))


def penalty_gradient(theta: np.ndarray, kind: str, mask: np.ndarray) -> np.ndarray:
    g = np.zeros_like(theta)
    if kind == "l1":
        g = np.sign(theta)
    elif kind == "l2":
        g = 2.0 * theta
    elif kind == "smooth":
        lo, hi = _smooth_pairs(theta.size // 2, mask)
        d = 2.0 * (theta[hi] - theta[lo])
        np.add.at(g, hi, d)
        np.add.at(g, lo, -d)
    g[~mask] = 0.0
    return g


def regularizer_value(params: QaoaParams, reg: Regularizer | str) -> float:
    """Unscaled penalty ``R`` over all ``2p`` parameters (no ``lam`` applied)."""
    kind = reg.kind if isinstance(reg, Regularizer) else Regularizer(reg).kind
    return penalty(params.to_vector(), kind, full_mask(params.p))


# -- objective --------------------------------------------------------------

class Objective:
    """``-<H_C> + lam * R`` on one cut table, restricted to a mask.

    The state entering the first selected layer only depends on fixed
    parameters, so it is computed once and reused for every evaluation.
    """

    def __init__(self, table: CutTable, base: QaoaParams, reg: Regularizer | None = None, mask=None):
        self.table = table
        self.p = base.p
        self.base = base.to_vector()
        self.reg = reg or Regularizer()
        self.mask = _check_mask(mask, 2 * self.p)
        layers = np.flatnonzero(self.mask[: self.p] | self.mask[self.p:])
        self.first_layer = int(layers[0])
        self._prefix: Statevector | None = None
        if self.first_layer > 0:
            head = QaoaParams(self.base[: self.first_layer], self.base[self.p: self.p + self.first_layer])
            self._prefix = run_ansatz(table, head)
        self.n_evals = 0

    def _can_resume(self, theta: np.ndarray) -> bool:
        return self._prefix is not None and np.array_equal(theta[~self.mask], self.base[~self.mask])

    def expectation(self, theta) -> float:
        theta = np.asarray(theta, dtype=np.float64)
        params = QaoaParams.from_vector(theta)
        self.n_evals += 1
        if self._can_resume(theta):
            s = run_ansatz(self.table, params, start=self._prefix, first_layer=self.first_layer)
        else:
            s = run_ansatz(self.table, params)
        return expectation(s, self.table)

    def penalty(self, theta) -> float:
        if not self.reg.active:
            return 0.0
        return self.reg.lam * penalty(np.asarray(theta, dtype=np.float64), self.reg.kind, self.mask)

    def __call__(self, theta) -> float:
        return -self.expectation(theta) + self.penalty(theta)

    def value_and_grad(self, theta) -> tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=np.float64)
        params = QaoaParams.from_vector(theta)
        grad_e, e0 = fd_gradient(self.table, params, self.mask, return_value=True)
        self.n_evals += 1 + 2 * int(self.mask.sum())
        value = -e0 + self.penalty(theta)
        grad = -grad_e
        if self.reg.active:
            grad = grad + self.reg.lam * penalty_gradient(theta, self.reg.kind, self.mask)
        return value, grad


def objective(t: CutTable, params: QaoaParams, reg: Regularizer | None = None, mask=None) -> float:
    """Regularized objective value at ``params``."""
    return Objective(t, params, reg, mask)(params.to_vector())


# -- configs and traces -----------------------------------------------------

@dataclass(frozen=True)
class AdagradConfig:
    lr: float = 0.1
    eps: float = 1e-8
    max_iters: int = 100

    def __post_init__(self):
        if self.lr <= 0 or self.eps <= 0 or self.max_iters < 0:
            raise ValueError("Adagrad needs lr > 0, eps > 0, max_iters >= 0")


@dataclass(frozen=True)
class NelderMeadConfig:
    max_evals: int = 200
    x_tol: float = 1e-6
    f_tol: float = 1e-8
    step: float = 0.1

    def __post_init__(self):
        if self.max_evals < 1 or self.x_tol <= 0 or self.f_tol <= 0 or self.step <= 0:
            raise ValueError("Nelder-Mead needs positive budget, tolerances and step")


@dataclass(frozen=True)
class SPSAConfig:
    a: float = 0.2
    c: float = 0.1
    A: float = 50.0
    alpha: float = 0.602
    gamma_exp: float = 0.101
    max_iters: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0 or self.A < 0 or self.max_iters < 0:
            raise ValueError("SPSA needs a > 0, c > 0, A >= 0, max_iters >= 0")


@dataclass
class OptimizationTrace:
    steps: int
    history: list[float]
    wall_time: float
    params: QaoaParams
    converged: bool = True
    n_evals: int = 0
    extra: dict = field(default_factory=dict)


def _central_diff(f: Callable, theta: np.ndarray, mask: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(theta)
    for i in np.flatnonzero(mask):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


# -- Adagrad ----------------------------------------------------------------

def adagrad_minimize(objective: Callable, init: QaoaParams, cfg: AdagradConfig = AdagradConfig(),
                     mask=None, gradient: Callable | None = None):
    """Fixed-budget Adagrad: ``G += g**2``, ``theta -= lr * g / (sqrt(G) + eps)``.

    ``objective`` may be an :class:`Objective` (its finite-difference
    gradient is used) or any callable on the parameter vector, in which case
    ``gradient`` is used if given and central differences otherwise.
    """
    theta = init.to_vector().copy()
    mask = _check_mask(mask, theta.size)

    if gradient is not None:
        def value_and_grad(x):
            return objective(x), np.asarray(gradient(x), dtype=np.float64)
    elif hasattr(objective, "value_and_grad"):
        value_and_grad = objective.value_and_grad
    else:
        def value_and_grad(x):
            return objective(x), _central_diff(objective, x, mask)

    accum = np.zeros_like(theta)
    history: list[float] = []
    t0 = time.perf_counter()
    for it in range(cfg.max_iters):
        f, g = value_and_grad(theta)
        history.append(float(f))
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            trace = OptimizationTrace(it, history, time.perf_counter() - t0,
                                      QaoaParams.from_vector(theta), converged=False)
            raise OptimizationError(f"non-finite objective or gradient at iteration {it}", trace)
        g = np.where(mask, g, 0.0)
        accum += g * g
        theta[mask] -= cfg.lr * g[mask] / (np.sqrt(accum[mask]) + cfg.eps)
    history.append(float(objective(theta)))
    wall = time.perf_counter() - t0
    if not np.isfinite(history[-1]):
        raise OptimizationError("non-finite final objective",
                                OptimizationTrace(cfg.max_iters, history, wall,
                                                  QaoaParams.from_vector(theta), converged=False))
    n_evals = getattr(objective, "n_evals", 0)
    params = QaoaParams.from_vector(theta)
    return params, OptimizationTrace(cfg.max_iters, history, wall, params, True, n_evals)


# -- Nelder-Mead ------------------------------------------------------------

def nelder_mead_minimize(objective: Callable, init: QaoaParams,
                         cfg: NelderMeadConfig = NelderMeadConfig(), mask=None):
    """Downhill simplex over the masked coordinates.

    Coefficients: reflection 1, expansion 2, contraction 1/2, shrink 1/2.
    Stops when both the simplex spread (``x_tol``) and the value spread
    (``f_tol``) are small, or after ``max_evals`` evaluations; in the latter
    case the best vertex is returned with ``converged=False``.
    """
    base = init.to_vector().copy()
    mask = _check_mask(mask, base.size)
    idx = np.flatnonzero(mask)
    d = idx.size
    nev = 0

    def f(y):
        nonlocal nev
        nev += 1
        x = base.copy()
        x[idx] = y
        return float(objective(x))

    t0 = time.perf_counter()
    y0 = base[idx]
    sim = np.empty((d + 1, d))
    sim[0] = y0
    for i in range(d):
        sim[i + 1] = y0
        sim[i + 1, i] += cfg.step
    fs = np.array([f(v) for v in sim])
    history = [float(fs[0])]
    nit = 0
    converged = False
    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if (np.max(np.abs(sim[1:] - sim[0])) <= cfg.x_tol
                and np.max(np.abs(fs[1:] - fs[0])) <= cfg.f_tol):
            converged = True
            break
        if nev >= cfg.max_evals:
            break
        if not np.isfinite(fs[0]):
            raise OptimizationError("non-finite objective in Nelder-Mead")
        centroid = sim[:-1].mean(axis=0)
        xr = centroid + (centroid - sim[-1])
        fr = f(xr)
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - sim[-1])
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
        elif fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = centroid + 0.5 * (xr - centroid)
                fc = f(xc)
                accept = fc <= fr
            else:
                xc = centroid + 0.5 * (sim[-1] - centroid)
                fc = f(xc)
                accept = fc < fs[-1]
            if accept:
                sim[-1], fs[-1] = xc, fc
            else:
                for i in range(1, d + 1):
                    sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
                    fs[i] = f(sim[i])
        nit += 1
        history.append(float(np.min(fs)))
    best = int(np.argmin(fs))
    x = base.copy()
    x[idx] = sim[best]
    wall = time.perf_counter() - t0
    params = QaoaParams.from_vector(x)
    return params, OptimizationTrace(nit, history, wall, params, converged, nev)


# -- SPSA -------------------------------------------------------------------

def spsa_minimize(objective: Callable, init: QaoaParams, cfg: SPSAConfig = SPSAConfig(), mask=None):
    """Simultaneous-perturbation stochastic approximation on the masked coordinates.

    Gains follow ``a_k = a / (A + k + 1)**alpha`` and
    ``c_k = c / (k + 1)**gamma_exp``; perturbations are Rademacher.  The
    best iterate seen is returned.
    """
    theta = init.to_vector().copy()
    mask = _check_mask(mask, theta.size)
    idx = np.flatnonzero(mask)
    rng = np.random.default_rng(cfg.seed)
    nev = 0

    def f(x):
        nonlocal nev
        nev += 1
        return float(objective(x))

    t0 = time.perf_counter()
    fx = f(theta)
    history = [fx]
    best_x, best_f = theta.copy(), fx
    for k in range(cfg.max_iters):
        ak = cfg.a / (cfg.A + k + 1) ** cfg.alpha
        ck = cfg.c / (k + 1) ** cfg.gamma_exp
        delta = np.zeros_like(theta)
        delta[idx] = rng.choice((-1.0, 1.0), size=idx.size)
        fp = f(theta + ck * delta)
        fm = f(theta - ck * delta)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            trace = OptimizationTrace(k, history, time.perf_counter() - t0,
                                      QaoaParams.from_vector(best_x), converged=False, n_evals=nev)
            raise OptimizationError(f"non-finite objective at SPSA iteration {k}", trace)
        ghat = (fp - fm) / (2.0 * ck) * delta[idx]
        theta[idx] -= ak * ghat
        fx = f(theta)
        history.append(fx)
        if fx < best_f:
            best_x, best_f = theta.copy(), fx
    wall = time.perf_counter() - t0
    params = QaoaParams.from_vector(best_x)
    return params, OptimizationTrace(cfg.max_iters, history, wall, params, True, nev)


OPTIMIZERS = {
    "adagrad": adagrad_minimize,
    "nelder-mead": nelder_mead_minimize,
    "spsa": spsa_minimize,
}


def minimize(name: str, objective: Callable, init: QaoaParams, cfg, mask=None):
    try:
        fn = OPTIMIZERS[name]
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; choose from {sorted(OPTIMIZERS)}") from None
    return fn(objective, init, cfg, mask)
