"""Pointwise value-function evaluation with the generalized Hopf formula.

For horizon ``T`` and a quadratic terminal cost ``J_z(z) = <z, V0 z> - 1`` the value is

    phi(z, t) = -min_p { 1 + <p, V0^-1 p>/4 + int_0^t H(p, s) ds - <z, p> }

with the game Hamiltonian

    H(p, s) = || Q_p(T - s) B^T e^{-(T-s)A^T} p ||_1 - || Q_e D^T e^{-(T-s)A^T} p ||_1.

The integral is a left-endpoint Riemann sum on a precomputed grid and the minimum is
found by a Newton iteration with the constant Hessian ``V0^-1 / 2`` and step halving.
The minimizer doubles as the spatial gradient of ``phi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lin_dynamics import (CaptureSet, ControlBoundSchedule, SystemMatrices,
                           expm_joint)


class InvalidGridError(ValueError):
    pass


class NumericalConditioningError(ArithmeticError):
    pass


# --------------------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadratureGrid:
    """Precomputed Hamiltonian samples on ``s_k = k h``, ``k = 0..N-1``.

    ``tau = T - s_k`` is the time (from the state's epoch) at which each sample's
    dynamics apply; bounds are read at engagement time ``t_offset + tau``.
    ``e_p`` has shape (N, k, n): row ``[j, i]`` is column i of ``e^{-tau_j A} B``.
    """

    t: float
    T: float
    h: float
    samples: np.ndarray
    tau: np.ndarray
    e_p: np.ndarray = field(repr=False)
    e_e: np.ndarray = field(repr=False)
    q_p_samples: np.ndarray = field(repr=False)
    q_e: float
    t_offset: float = 0.0
    # (B^T, (A B)^T, D, A D): rows are e_p[j] = B^T - tau_j (A B)^T, likewise e_e
    basis: tuple = field(default=None, repr=False)

    def __post_init__(self):
        # flattened views for the two matvecs in the objective
        object.__setattr__(self, "_ep_flat", self.e_p.reshape(-1, self.e_p.shape[-1]))
        object.__setattr__(self, "_qp_flat", self.q_p_samples.reshape(-1))
        object.__setattr__(self, "structured", _is_lateral(self.basis))

    def kernel_args(self):
        """Arguments of the compiled loops after ``(p, z, V0_inv)``."""
        Bt, ABt, d, ad = self.basis
        return Bt, ABt, d, ad, self.tau, self.q_p_samples, self.q_e, self.h

    @property
    def size(self) -> int:
        return len(self.samples)


def _is_lateral(basis) -> bool:
    """True when every input acts on the lateral velocity only: pursuer i on its own
    ``dvy`` and the evader on every ``dvy`` with sign -1 (the exact solvers need it)."""
    if basis is None:
        return False
    Bt, ABt, d, ad = basis
    k, n = Bt.shape
    if n != 4 * k:
        return False
    ref_b = np.zeros((k, n))
    ref_ab = np.zeros((k, n))
    for i in range(k):
        ref_b[i, 4 * i + 3] = Bt[i, 4 * i + 3]
        ref_ab[i, 4 * i + 1] = Bt[i, 4 * i + 3]
    ref_d = np.zeros(n)
    ref_d[3::4] = -1.0
    ref_ad = np.zeros(n)
    ref_ad[1::4] = -1.0
    return bool(np.all(np.abs(np.diag(Bt[:, 3::4])) == 1.0) and np.array_equal(Bt, ref_b)
                and np.array_equal(ABt, ref_ab) and np.array_equal(d, ref_d)
                and np.array_equal(ad, ref_ad))


def quadrature_size(t: float, h_max: float = 0.05, n_min: int = 64) -> int:
    if t <= 0:
        return 0
    return max(n_min, math.ceil(t / h_max - 1e-9))


def build_grid(system: SystemMatrices, bounds: ControlBoundSchedule, t: float,
               T: float | None = None, t_offset: float = 0.0, *, h_max: float = 0.05,
               n_min: int = 64, q_e: float | None = None) -> QuadratureGrid:
    """Grid covering ``[0, t]`` for horizon ``T`` (defaults to ``t``).

    ``q_e`` overrides the evader bound used in the model (e.g. an inflated bound).
    """
    if t < 0:
        raise InvalidGridError(f"integration time must be non-negative (got {t})")
    T = t if T is None else T
    k, n = system.k, system.n
    N = quadrature_size(t, h_max, n_min)
    q_e = bounds.q_e if q_e is None else q_e
    AB = system.A_hat @ system.B_hat
    AD = system.A_hat @ system.D_hat
    basis = (np.ascontiguousarray(system.B_hat.T), np.ascontiguousarray(AB.T),
             system.D_hat[:, 0].copy(), AD[:, 0].copy())
    if N == 0:
        return QuadratureGrid(t, T, 0.0, np.zeros(0), np.zeros(0), np.zeros((0, k, n)),
                              np.zeros((0, n)), np.zeros((0, k)), q_e, t_offset, basis)
    h = t / N
    s = h * np.arange(N)
    tau = T - s
    # e^{-tau A} B = B - tau A B since A is nilpotent
    e_p = (system.B_hat.T[None, :, :] - tau[:, None, None] * AB.T[None, :, :])
    e_e = system.D_hat[:, 0][None, :] - tau[:, None] * AD[:, 0][None, :]
    q = bounds.pursuer_samples(t_offset + tau)
    q_p = np.repeat(q[:, None], k, axis=1)
    return QuadratureGrid(t, T, h, s, tau, e_p, e_e, q_p, float(q_e), t_offset, basis)


def hamiltonian(p, s: float, system: SystemMatrices, T: float, q_p, q_e: float) -> float:
    """Direct evaluation of ``H(p, s)`` from the system matrices.

    ``q_p`` is the pursuer bound at this sample (scalar or per-pursuer vector).
    """
    p = np.asarray(p, dtype=float)
    E = expm_joint(system, -(T - s))
    q_p = np.broadcast_to(np.asarray(q_p, dtype=float), (system.k,))
    pursuer = np.sum(np.abs(q_p * (system.B_hat.T @ E.T @ p)))
    evader = np.sum(np.abs(q_e * (system.D_hat.T @ E.T @ p)))
    return float(pursuer - evader)


def hamiltonian_integral(p, grid: QuadratureGrid) -> float:
    if grid.size == 0:
        if grid.t > 0:
            raise InvalidGridError("empty quadrature grid for positive integration time")
        return 0.0
    p = np.asarray(p, dtype=float)
    u = grid._ep_flat @ p
    w = grid.e_e @ p
    return float(grid.h * (grid._qp_flat @ np.abs(u) - grid.q_e * np.sum(np.abs(w))))


# --------------------------------------------------------------------------- terminal cost


@dataclass(frozen=True)
class TerminalCost:
    """``J_z(z) = <z, V0 z> - 1`` with ``V0 = e^{T A^T} W^-1 e^{T A}``; ``W`` holds the
    diagonal of the capture shape matrix."""

    T: float
    V0: np.ndarray = field(repr=False)
    V0_inv: np.ndarray = field(repr=False)
    W: np.ndarray | None = field(default=None, repr=False)

    def __call__(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.V0 @ z - 1.0)


def build_terminal_cost(system: SystemMatrices, capture: CaptureSet, T: float) -> TerminalCost:
    W = np.diag(capture.W_i)
    if np.any(W <= 0) or not np.all(np.isfinite(W)):
        raise NumericalConditioningError("capture shape matrix must be positive definite")
    E = expm_joint(system, T)
    E_inv = expm_joint(system, -T)
    V0 = E.T @ (E / W[:, None])
    # closed-form inverse, avoids a numerical inversion of a badly scaled matrix
    V0_inv = E_inv @ (W[:, None] * E_inv.T)
    return TerminalCost(float(T), 0.5 * (V0 + V0.T), 0.5 * (V0_inv + V0_inv.T), W.copy())


def terminal_cost_conjugate(p, tc: TerminalCost) -> float:
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(tc.V0_inv)):
        raise NumericalConditioningError("terminal cost matrix is singular")
    return float(1.0 + 0.25 * p @ tc.V0_inv @ p)


def hessian(tc: TerminalCost) -> np.ndarray:
    return tc.V0_inv / 2.0


def hopf_objective(p, z, tc: TerminalCost, grid: QuadratureGrid):
    """Objective value and (sub)gradient in ``p``; ``sgn(0) = 0`` at kinks."""
    p = np.asarray(p, dtype=float)
    z = np.asarray(z, dtype=float)
    Vp = tc.V0_inv @ p
    value = 1.0 + 0.25 * (p @ Vp) - z @ p
    grad = 0.5 * Vp - z
    if grid.size:
        u = grid._ep_flat @ p
        w = grid.e_e @ p
        value += grid.h * (grid._qp_flat @ np.abs(u) - grid.q_e * np.sum(np.abs(w)))
        grad = grad + grid.h * ((grid._qp_flat * np.sign(u)) @ grid._ep_flat
                                - grid.q_e * (np.sign(w) @ grid.e_e))
    elif grid.t > 0:
        raise InvalidGridError("empty quadrature grid for positive integration time")
    return float(value), grad


# --------------------------------------------------------------------------- minimization


@dataclass(frozen=True)
class SolverOptions:
    """Minimizer settings.

    ``method`` selects the algorithm:

    * ``"structured"`` (default): for lateral-only systems, solve the Riemann-sum
      objective exactly. Without an evader term that is a single exact solve; otherwise
      the smoothed Newton iterate fixes the evader sign pattern, the piece is solved
      exactly and neighbouring patterns are tried until none improves. Other systems
      fall back to ``"smoothed"``.
    * ``"smoothed"``: the halving Newton iteration on ``sqrt(u^2 + eps^2)``-smoothed
      norms with the pursuer curvature added to ``V0^-1 / 2``, shrinking ``eps``
      geometrically.
    * ``"relaxed"``: the constant Hessian ``V0^-1 / 2`` on the exact objective.
    * ``"exact"``: every evader sign pattern solved exactly (global minimum, O(k N^2)).

    All report the exact objective at the returned costate.
    """

    tolerance: float = 1e-6
    max_iter: int = 100
    min_step: float = 2.0**-30
    # "exact": 2 V0 z, the minimizer without the Hamiltonian integral.
    # "half": V0 z / 2, a quarter of the exact minimizer.
    initial_guess: str = "exact"
    method: str = "structured"
    max_patterns: int = 64
    # "compiled" runs the numba loops, "numpy" the reference loops below
    backend: str = "compiled"
    eps_start: float = 1e-2
    eps_factor: float = 1e-1
    eps_end: float = 1e-10
    # relative step tolerance of the intermediate smoothing stages
    stage_tolerance: float = 1e-6


@dataclass
class HopfSolution:
    value: float
    p_star: np.ndarray
    iterations: int
    converged: bool
    final_step_norm: float
    objective: float
    @property
    def gradient(self) -> np.ndarray:
        """Spatial gradient of the value function at the evaluation point."""
        return self.p_star


def initial_costate(z, tc: TerminalCost, how: str = "exact") -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if how == "exact":
        return 2.0 * tc.V0 @ z
    if how == "half":
        return 0.5 * tc.V0 @ z
    raise ValueError(f"unknown initial guess {how!r}")


def _has_hamiltonian(grid: QuadratureGrid) -> bool:
    return grid.size > 0 and (np.any(grid._qp_flat != 0) or grid.q_e != 0)


def minimize_hopf(z, tc: TerminalCost, grid: QuadratureGrid,
                  opts: SolverOptions | None = None, p0=None,
                  eps_start: float | None = None) -> HopfSolution:
    """Minimize the Hopf objective over the costate.

    ``p0`` overrides the initial guess and ``eps_start`` the relative starting
    smoothing. Warm starts from a neighbouring horizon with small ``eps_start`` can
    stall far from the minimum, so the reachability search always starts cold. Hitting
    the iteration cap returns the last iterate with ``converged=False``.
    """
    opts = opts or SolverOptions()
    z = np.asarray(z, dtype=float)
    p = initial_costate(z, tc, opts.initial_guess) if p0 is None else np.array(p0, float)
    if grid.size == 0 and grid.t > 0:
        raise InvalidGridError("empty quadrature grid for positive integration time")
    if opts.backend not in ("compiled", "numpy"):
        raise ValueError(f"unknown solver backend {opts.backend!r}")
    method = opts.method
    exact_ok = grid.structured and tc.W is not None
    if method in ("structured", "exact") and not exact_ok:
        method = "smoothed"
    if method == "exact":
        from ._kernels import exact_global
        p, f = exact_global(z, tc.W, tc.T, grid.tau, grid.q_p_samples, grid.q_e, grid.h)
        return HopfSolution(-f, p, 1, True, 0.0, f)
    if method == "structured":
        from ._kernels import exact_refine
        it = 0
        if grid.q_e != 0 and grid.size:
            p, it, _, _ = _smoothed(z, tc, grid, opts, p, _eps0(p, grid, opts, eps_start))
        p, f, rounds = exact_refine(p, z, tc.W, tc.T, grid.tau, grid.q_p_samples, grid.q_e,
                                    grid.h, opts.max_patterns)
        return HopfSolution(-f, p, int(it) + int(rounds), True, 0.0, f)
    if method == "relaxed":
        p, it, converged, step_norm = _relaxed(z, tc, grid, opts, p)
    elif method == "smoothed":
        p, it, converged, step_norm = _smoothed(z, tc, grid, opts, p,
                                                _eps0(p, grid, opts, eps_start))
    else:
        raise ValueError(f"unknown solver method {opts.method!r}")
    f, _ = hopf_objective(p, z, tc, grid)
    return HopfSolution(value=-f, p_star=p, iterations=int(it), converged=bool(converged),
                        final_step_norm=float(step_norm), objective=f)


def _eps0(p, grid, opts, eps_start) -> float:
    if not _has_hamiltonian(grid):
        return 0.0
    scale = float(np.max(np.abs(grid._ep_flat @ p), initial=0.0))
    rel = opts.eps_start if eps_start is None else eps_start
    return rel * scale if scale > 0 else rel * max(1.0, float(np.linalg.norm(p)))


def _relaxed(z, tc, grid, opts, p):
    if opts.backend == "compiled":
        from ._kernels import relaxed_newton
        p, _, it, converged, step_norm = relaxed_newton(
            p, z, tc.V0_inv, 2.0 * tc.V0, *grid.kernel_args(), opts.tolerance,
            opts.max_iter, opts.min_step)
        return p, it, converged, step_norm
    f, g = hopf_objective(p, z, tc, grid)
    newton = 2.0 * tc.V0
    step_norm = math.inf
    converged = False
    it = 0
    while it < opts.max_iter:
        it += 1
        d = -(newton @ g)
        d_norm = float(np.linalg.norm(d))
        if d_norm <= opts.tolerance:
            step_norm = d_norm
            converged = True
            break
        alpha = 1.0
        while True:
            p_new = p + alpha * d
            f_new, g_new = hopf_objective(p_new, z, tc, grid)
            if f_new <= f:
                break
            alpha *= 0.5
            if alpha < opts.min_step:
                break
        if f_new > f:
            # no decrease along the Newton direction
            step_norm = 0.0
            converged = True
            break
        step_norm = alpha * d_norm
        p, f, g = p_new, f_new, g_new
        if step_norm <= opts.tolerance:
            converged = True
            break
    return p, it, converged, step_norm


def smoothed_objective(p, z, tc: TerminalCost, grid: QuadratureGrid, eps: float):
    """Smoothed objective, its gradient and the convex Hessian model."""
    p = np.asarray(p, dtype=float)
    Vp = tc.V0_inv @ p
    f = 1.0 + 0.25 * (p @ Vp) - z @ p
    g = 0.5 * Vp - z
    H = 0.5 * tc.V0_inv.copy()
    if grid.size:
        E, q = grid._ep_flat, grid._qp_flat
        u = E @ p
        s = np.sqrt(u * u + eps * eps)
        f += grid.h * (q @ (s - eps))
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(s > 0, u / s, 0.0)
            curv = np.where(s > 0, q * eps * eps / s**3, 0.0)
        g = g + grid.h * ((q * ratio) @ E)
        H += grid.h * (E.T * curv) @ E
        w = grid.e_e @ p
        sw = np.sqrt(w * w + eps * eps)
        f -= grid.h * grid.q_e * np.sum(sw - eps)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio_w = np.where(sw > 0, w / sw, 0.0)
        g = g - grid.h * grid.q_e * (ratio_w @ grid.e_e)
    return float(f), g, H


def _smoothed(z, tc, grid, opts, p, eps0):
    if opts.backend == "compiled":
        from ._kernels import smoothed_newton
        return smoothed_newton(p, z, tc.V0_inv, *grid.kernel_args(), eps0,
                               opts.eps_factor, opts.eps_end, opts.tolerance,
                               opts.stage_tolerance, opts.max_iter, opts.min_step)
    eps = eps0
    total = 0
    converged = False
    step_norm = math.inf
    while True:
        last = eps <= opts.eps_end * max(1.0, float(np.linalg.norm(p)))
        f = smoothed_objective(p, z, tc, grid, eps)[0]
        stage_converged = False
        for _ in range(opts.max_iter):
            total += 1
            _, g, H = smoothed_objective(p, z, tc, grid, eps)
            d = -np.linalg.solve(H, g)
            alpha = 1.0
            while True:
                f_new = smoothed_objective(p + alpha * d, z, tc, grid, eps)[0]
                if f_new <= f:
                    break
                alpha *= 0.5
                if alpha < opts.min_step:
                    break
            if f_new > f:
                step_norm = 0.0
                stage_converged = True
                break
            step_norm = alpha * float(np.linalg.norm(d))
            p = p + alpha * d
            f = f_new
            tol = opts.tolerance if last else opts.stage_tolerance
            if step_norm <= tol * (1.0 + float(np.linalg.norm(p))):
                stage_converged = True
                break
        if last or eps == 0.0:
            converged = stage_converged
            break
        eps *= opts.eps_factor
    return p, total, converged, step_norm


def hopf_value(z, t: float, system: SystemMatrices, capture: CaptureSet,
               bounds: ControlBoundSchedule, T: float | None = None,
               t_offset: float = 0.0, opts: SolverOptions | None = None,
               **grid_kw) -> HopfSolution:
    """One-shot ``phi(z, t)`` for a single terminal set."""
    T = t if T is None else T
    grid = build_grid(system, bounds, t, T, t_offset, **grid_kw)
    tc = build_terminal_cost(system, capture, T)
    return minimize_hopf(z, tc, grid, opts)
