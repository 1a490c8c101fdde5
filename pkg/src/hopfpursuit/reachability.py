"""Minimum time-to-reach, min-plus union over pursuers and bang-bang control extraction."""
from __future__ import annotations

import logging
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .hopf_solver import (HopfSolution, SolverOptions, build_grid, build_terminal_cost,
                          minimize_hopf)
from .lin_dynamics import (CaptureSet, ControlBoundSchedule, SystemMatrices,
                           build_capture_set, expm_joint)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GameModel:
    """Everything the value-function solves need for one engagement."""

    system: SystemMatrices
    bounds: ControlBoundSchedule
    r: float
    v_max: float = 1000.0
    solver: SolverOptions = field(default_factory=SolverOptions)
    h_max: float = 0.05
    n_min: int = 64
    scan_step: float = 0.1
    bisect_tol: float = 1e-4
    hint_window: float = 0.02
    tie_tol: float = 1e-9
    evader_inflation: float = 1.0
    captures: tuple[CaptureSet, ...] = field(init=False, repr=False)

    def __post_init__(self):
        caps = tuple(build_capture_set(self.r, self.v_max, self.system.k, i)
                     for i in range(self.system.k))
        object.__setattr__(self, "captures", caps)

    @property
    def k(self) -> int:
        return self.system.k

    @property
    def q_e_model(self) -> float:
        return self.bounds.q_e * self.evader_inflation

    def grid(self, t: float, T: float | None = None, t_offset: float = 0.0):
        return build_grid(self.system, self.bounds, t, T, t_offset, h_max=self.h_max,
                          n_min=self.n_min, q_e=self.q_e_model)


@dataclass
class UnionValue:
    phi_i: list[float]
    phi: float
    argmin_index: int
    solutions: list[HopfSolution] = field(repr=False)
    degraded: bool = False

    @property
    def p_star(self) -> np.ndarray:
        return self.solutions[self.argmin_index].p_star


@dataclass
class ReachResult:
    t_star: float | None
    reachable: bool
    p_star: np.ndarray | None
    phi_at_t_star: float
    active_vehicle: int
    converged: bool = True
    probes: int = 0
    horizon: float | None = None  # T used for p_star


@dataclass
class ControlPair:
    a_p: np.ndarray
    a_e: float


def union_value(x0, t: float, model: GameModel, t_offset: float = 0.0,
                T: float | None = None, executor: Executor | None = None) -> UnionValue:
    """``min_i phi_i(x0, t)`` over the k single-pursuer capture sets.

    All solves share one quadrature grid; only the terminal cost differs. With an
    ``executor`` the k solves are submitted concurrently.
    """
    T = t if T is None else T
    x0 = np.asarray(x0, dtype=float)
    grid = model.grid(t, T, t_offset)

    def solve(cap):
        return minimize_hopf(x0, build_terminal_cost(model.system, cap, T), grid, model.solver)

    if executor is None:
        sols = [solve(cap) for cap in model.captures]
    else:
        sols = list(executor.map(solve, model.captures))
    phis = [s.value for s in sols]
    idx = int(np.argmin(phis))  # first index on ties
    degraded = not all(s.converged for s in sols)
    if degraded:
        log.debug("non-converged per-vehicle solve at t=%.4f", t)
    return UnionValue(phis, phis[idx], idx, sols, degraded)


class _NonPositive(Exception):
    def __init__(self, t):
        self.t = t


class _Search:
    """Memoized union-value probes of one ``min_time_to_reach`` call."""

    def __init__(self, x0, t_max, model, t_offset, executor):
        self.x0, self.t_max, self.model = x0, t_max, model
        self.t_offset, self.executor = t_offset, executor
        self.cache: dict[float, UnionValue] = {}

    def __call__(self, t: float) -> UnionValue:
        if t not in self.cache:
            self.cache[t] = union_value(self.x0, t, self.model, self.t_offset,
                                        executor=self.executor)
        return self.cache[t]

    def value(self, t: float) -> float:
        return self(t).phi

    def result(self, t: float) -> ReachResult:
        u = self(t)
        return ReachResult(t, True, u.p_star, u.phi, u.argmin_index, not u.degraded,
                           len(self.cache), t)

    def unreachable(self) -> ReachResult:
        t, u = min(self.cache.items(), key=lambda item: (item[1].phi, item[0]))
        return ReachResult(None, False, u.p_star, u.phi, u.argmin_index, not u.degraded,
                           len(self.cache), t)

    def bisect(self, lo: float, hi: float) -> ReachResult:
        while hi - lo > self.model.bisect_tol:
            mid = 0.5 * (lo + hi)
            if self.value(mid) <= 0:
                hi = mid
            else:
                lo = mid
        return self.result(hi)

    def local_min(self, a: float, b: float) -> float:
        """Minimize over ``[a, b]``; raises ``_NonPositive`` at the first probe <= 0."""
        def f(t):
            v = self.value(t)
            if v <= 0:
                raise _NonPositive(t)
            return v
        res = scipy.optimize.minimize_scalar(
            f, bounds=(a, b), method="bounded", options={"xatol": self.model.bisect_tol})
        return float(res.x)


def min_time_to_reach(x0, t_max: float, model: GameModel, t_offset: float = 0.0,
                      hint: float | None = None,
                      executor: Executor | None = None) -> ReachResult:
    """Smallest ``t <= t_max`` with ``phi(x0, t) <= 0``.

    Without ``hint``: scan forward from zero in ``model.scan_step`` increments for the
    first sign change from positive to non-positive, then bisect to
    ``model.bisect_tol``. Because the closing channel is uncontrolled, the set where
    ``phi <= 0`` can be an interval much shorter than the scan step; every interior
    local minimum of the scan samples is therefore refined by a bounded scalar
    minimization before the scan moves on.

    With ``hint`` (typically the previous answer shifted by the step length) the search
    is local: a bracket grown geometrically from ``model.hint_window`` around the hint,
    closed with Brent's method when the hint is already non-positive, otherwise a
    bounded minimization of the local dip. An unreachable local answer is final; the
    caller decides when to rescan from zero.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    search = _Search(np.asarray(x0, dtype=float), t_max, model, t_offset, executor)
    if search.value(0.0) <= 0:
        return search.result(0.0)
    if hint is not None and 0 < hint <= t_max:
        return _hinted(search, hint)
    return _scan(search)


def _scan(search: _Search) -> ReachResult:
    model, t_max = search.model, search.t_max
    ts = [0.0]
    while ts[-1] < t_max:
        t = min(ts[-1] + model.scan_step, t_max)
        if search.value(t) <= 0:
            return search.bisect(ts[-1], t)
        ts.append(t)
        if len(ts) >= 3:
            a, m, b = ts[-3:]
            if search.value(m) < search.value(a) and search.value(m) < search.value(b):
                try:
                    search.local_min(a, b)
                except _NonPositive as hit:
                    return search.bisect(a, hit.t)
    return search.unreachable()


def _hinted(search: _Search, hint: float) -> ReachResult:
    model, t_max = search.model, search.t_max
    w = model.hint_window
    t_neg = hint if search.value(hint) <= 0 else None
    if t_neg is None:
        # walk downhill from the hint until the value rises again
        lo, hi = max(0.0, hint - w), min(t_max, hint + w)
        v_lo, v_mid, v_hi = search.value(lo), search.value(hint), search.value(hi)
        try:
            for v in (v_lo, v_hi):
                if v <= 0:
                    raise _NonPositive(lo if v is v_lo else hi)
            mid = hint
            while v_lo < v_mid or v_hi < v_mid:
                step = 2 * (hi - lo)
                if v_lo < v_hi:
                    if lo == 0.0:
                        break
                    hi, mid, lo = mid, lo, max(0.0, lo - step)
                    v_hi, v_mid, v_lo = v_mid, v_lo, search.value(lo)
                    if v_lo <= 0:
                        raise _NonPositive(lo)
                else:
                    if hi == t_max:
                        break
                    lo, mid, hi = mid, hi, min(t_max, hi + step)
                    v_lo, v_mid, v_hi = v_mid, v_hi, search.value(hi)
                    if v_hi <= 0:
                        raise _NonPositive(hi)
            search.local_min(lo, hi)
            return search.unreachable()
        except _NonPositive as hit:
            t_neg = hit.t
    # grow a bracket backward from the non-positive probe and close it
    hi = t_neg
    while True:
        lo = max(0.0, hi - w)
        if search.value(lo) > 0:  # always true at lo = 0
            break
        hi, w = lo, 2 * w
    if hi - lo <= model.bisect_tol:
        return search.result(hi)
    root = scipy.optimize.brentq(search.value, lo, hi, xtol=model.bisect_tol,
                                 rtol=4 * np.finfo(float).eps)
    t_star = min(t for t, u in search.cache.items()
                 if root - model.bisect_tol <= t <= hi and u.phi <= 0)
    return search.result(t_star)


def _sgn(v: np.ndarray, tol: float) -> np.ndarray:
    out = np.sign(v)
    out[np.abs(v) <= tol] = 0.0
    return out


def extract_controls(p_star, s: float, T: float, model: GameModel,
                     t_offset: float = 0.0) -> ControlPair:
    """Bang-bang controls that realise the optimum at Hopf time ``s`` of horizon ``T``.

    Real time from the state's epoch is ``T - s``; ``s = T`` is the current instant.
    The pursuers move against the costate and the evader along it, so
    ``a_p = -Q_p sgn(B^T e^{-(T-s)A^T} p)`` and ``a_e = Q_e sgn(D^T e^{-(T-s)A^T} p)``.
    Arguments within ``tie_tol * |p|`` of zero give zero control.
    """
    p = np.asarray(p_star, dtype=float)
    tol = model.tie_tol * float(np.linalg.norm(p))
    Et = expm_joint(model.system, -(T - s)).T
    arg_p = model.system.B_hat.T @ Et @ p
    arg_e = model.system.D_hat.T @ Et @ p
    q_p = model.bounds.pursuer(t_offset + T - s, model.k)
    a_p = -q_p * _sgn(arg_p, tol)
    a_e = float(model.bounds.q_e * _sgn(arg_e, tol)[0])
    return ControlPair(a_p, a_e)


def hamiltonian_gradient(p, s: float, T: float, model: GameModel,
                         t_offset: float = 0.0) -> np.ndarray:
    """``grad_p H(p, s)`` for the model's Hamiltonian (``sgn(0) = 0``)."""
    p = np.asarray(p, dtype=float)
    E = expm_joint(model.system, -(T - s))
    Ep = E @ model.system.B_hat
    Ee = E @ model.system.D_hat
    q_p = model.bounds.pursuer(t_offset + T - s, model.k)
    return Ep @ (q_p * np.sign(Ep.T @ p)) - model.bounds.q_e * (Ee @ np.sign(Ee.T @ p))


def convexity_check(bounds: ControlBoundSchedule, s: float, k: int = 1,
                    warn: bool = True) -> bool:
    """True when the evader bound does not exceed any pursuer bound at time ``s``.

    When it fails, the min-plus union is only an upper bound on the game value.
    """
    ok = bool(np.all(bounds.q_e <= bounds.pursuer(s, k)))
    if not ok and warn:
        log.warning("t=%.3f: evader bound %.3f exceeds pursuer bound %.3f; union value is "
                    "an upper bound only", s, bounds.q_e, bounds.q_p(s))
    return ok
