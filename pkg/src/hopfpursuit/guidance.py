"""Per-step pursuer guidance: Hopf bang-bang commands with a proportional navigation
fallback, third-order autopilot lags and the evader's adversarial command."""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .config import PNConfig, ScenarioConfig
from .lin_dynamics import joint_linear_state
from .reachability import ReachResult, convexity_check, extract_controls, min_time_to_reach

log = logging.getLogger(__name__)


class GeometryError(ValueError):
    """Line-of-sight geometry is undefined (zero range)."""


class Mode(enum.Enum):
    HOPF = "Hopf"
    PN = "PN"


@dataclass
class GuidanceCommand:
    a_p: np.ndarray
    mode: tuple[Mode, ...]
    active_vehicle: int | None
    t_star: float | None
    phi: float = float("nan")
    p_star: np.ndarray | None = field(default=None, repr=False)
    converged: bool = True
    convex: bool = True
    reach: ReachResult | None = field(default=None, repr=False)


@dataclass
class AutopilotState:
    """Lag states of the three cascaded first-order filters, one entry per vehicle."""

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray

    @classmethod
    def zeros(cls, k: int) -> "AutopilotState":
        return cls(np.zeros(k), np.zeros(k), np.zeros(k))


# --------------------------------------------------------------------------- laws


def proportional_navigation(rel_pos, rel_vel, cfg: PNConfig) -> float:
    """Pure PN: ``N * V_c * lambda_dot``.

    ``rel_pos``/``rel_vel`` are target minus interceptor. The result is the
    acceleration normal to the line of sight, positive counter-clockwise.
    """
    x, y = rel_pos
    vx, vy = rel_vel
    r2 = x * x + y * y
    if r2 == 0:
        raise GeometryError("line of sight undefined at zero range")
    lam_dot = (x * vy - y * vx) / r2
    v_c = -(x * vx + y * vy) / np.sqrt(r2)
    return float(cfg.nav_constant * v_c * lam_dot)


def autopilot_step(command, state: AutopilotState, dt: float, tau: float = 0.2):
    """One explicit Euler step of ``(tau s + 1)^-3``; returns ``(achieved, new_state)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    c = np.asarray(command, dtype=float)
    g = dt / tau
    x1 = state.x1 + g * (c - state.x1)
    x2 = state.x2 + g * (state.x1 - state.x2)
    x3 = state.x3 + g * (state.x2 - state.x3)
    new = AutopilotState(x1, x2, x3)
    return x3.copy(), new


def _pn_commands(states, cfg: ScenarioConfig) -> np.ndarray:
    out = np.empty(len(states))
    for i, (dx, dy, dth) in enumerate(states):
        # evader relative to pursuer, velocities resolved in the evader frame
        rel_vel = (cfg.v_e - cfg.v_p * np.cos(dth), -cfg.v_p * np.sin(dth))
        out[i] = proportional_navigation((-dx, -dy), rel_vel, cfg.pn)
    return out


def _fill_ties(a_p, x, t_go: float, model) -> np.ndarray:
    """Minimum-energy command for vehicles whose Hopf control is a tie.

    A zero sgn argument means the vehicle has lateral slack at ``T*`` and every
    admissible control is optimal; pick the least-effort one that nulls the
    zero-effort miss at ``T*``. The caller clamps to the bound.
    """
    a_p = np.array(a_p, dtype=float)
    if t_go <= 0:
        return a_p
    for i in np.flatnonzero(a_p == 0):
        zem = x[4 * i + 1] + x[4 * i + 3] * t_go
        a_p[i] = -3.0 * zem / (model.system.B_hat[4 * i + 3, i] * t_go**2)
    return a_p


def guidance_step(states, t_now: float, cfg: ScenarioConfig,
                  hint: float | None = None) -> GuidanceCommand:
    """Pursuer commands at ``t_now`` from the nonlinear relative ``states``.

    Searches for the minimum time-to-reach within the remaining scenario time. When
    reachable with converged solves, the Hopf controls at the current instant are
    used; otherwise every vehicle flies PN. Commands are clamped to ``Q_p(t_now)``.
    """
    model = cfg.model_for(cfg.aspects_at(states))
    x = joint_linear_state(states, cfg.v_p, cfg.v_e)
    t_max = cfg.horizon - t_now
    if t_max <= 0:
        raise ValueError("t_now is past the scenario horizon")
    res = min_time_to_reach(x, t_max, model, t_offset=t_now, hint=hint)
    q_now = float(cfg.q_p(t_now))
    convex = convexity_check(cfg.bounds, t_now, cfg.k)
    if res.reachable and res.converged:
        ctrl = extract_controls(res.p_star, res.t_star, res.t_star, model, t_offset=t_now)
        a_p, mode = _fill_ties(ctrl.a_p, x, res.t_star, model), (Mode.HOPF,) * cfg.k
    else:
        if res.reachable:
            log.info("t=%.4f: non-converged solve, PN fallback", t_now)
        a_p, mode = _pn_commands(states, cfg), (Mode.PN,) * cfg.k
    a_p = np.clip(a_p, -q_now, q_now)
    return GuidanceCommand(a_p, mode, res.active_vehicle, res.t_star, res.phi_at_t_star,
                           res.p_star if res.converged else None, res.converged, convex, res)


def evader_step(p_star, t_now: float, cfg: ScenarioConfig, previous: float = 0.0) -> float:
    """Evader command from the pursuers' latest costate (held when there is none).

    ``p_star`` is the costate at the current instant, so the evader maximizes
    ``<p, D a_e>``: ``a_e = Q_e sgn(D^T p)``.
    """
    if p_star is None:
        return float(previous)
    # only D enters a_e and D does not depend on the aspects
    return extract_controls(p_star, 0.0, 0.0, cfg.model, t_offset=t_now).a_e


# --------------------------------------------------------------------------- controller


class GuidanceController:
    """Stateful wrapper used by the simulation: hints each search with the previous
    answer, rescans from zero every ``cfg.rescan_interval`` seconds and re-solves only
    every ``cfg.decimation``-th step."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self._last: GuidanceCommand | None = None
        self._last_scan = -np.inf
        self._count = 0
        self.a_e = 0.0

    def step(self, states, t_now: float):
        """Returns ``(command, a_e, solve_seconds, solved)``."""
        cfg = self.cfg
        if self._last is not None and self._count % cfg.decimation:
            self._count += 1
            return self._last, self.a_e, 0.0, False
        self._count += 1
        hint = None
        if self._last is not None and t_now - self._last_scan < cfg.rescan_interval:
            reach = self._last.reach
            prev = reach.t_star if reach.reachable else reach.horizon
            if prev is not None:
                hint = prev - cfg.dt * cfg.decimation
                if hint <= 0:
                    hint = None
        t0 = time.perf_counter()
        cmd = guidance_step(states, t_now, cfg, hint)
        elapsed = time.perf_counter() - t0
        if hint is None:
            self._last_scan = t_now
        self.a_e = evader_step(cmd.p_star, t_now, cfg, self.a_e)
        self._last = cmd
        return cmd, self.a_e, elapsed, True
