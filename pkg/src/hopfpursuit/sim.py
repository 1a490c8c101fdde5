"""Closed-loop 3DOF engagement: nonlinear relative dynamics stepped by explicit Euler
with guidance and autopilots in the loop, capture detection and inertial
reconstruction."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .guidance import AutopilotState, GuidanceController, Mode, autopilot_step
from .lin_dynamics import nonlinear_derivative, wrap_angle

log = logging.getLogger(__name__)


class ReconstructionError(ValueError):
    pass


@dataclass
class TrajectoryLog:
    """One row per step. Commands in row j act over ``[time[j], time[j] + dt)``; the
    row at capture carries the commands of the previous step."""

    time: np.ndarray
    states: np.ndarray        # (N, k, 3) nonlinear relative states
    a_cmd: np.ndarray         # (N, k) commanded pursuer accelerations
    a_ach: np.ndarray         # (N, k) achieved (autopilot output)
    a_e: np.ndarray           # (N,)
    mode: np.ndarray          # (N, k) 1 for Hopf, 0 for PN
    argmin: np.ndarray        # (N,) 0-based union argmin, -1 when absent
    phi: np.ndarray           # (N,) value at t_star (or best value when unreachable)
    t_star: np.ndarray        # (N,) nan when unreachable
    convex: np.ndarray        # (N,) convexity check at each step
    solve_time: np.ndarray    # (N,) wall-clock guidance seconds (0 when not re-solved)
    evader_xy: np.ndarray | None = field(default=None, repr=False)    # (N, 2)
    evader_heading: np.ndarray | None = field(default=None, repr=False)
    pursuer_xy: np.ndarray | None = field(default=None, repr=False)   # (N, k, 2)

    def __len__(self) -> int:
        return len(self.time)

    @property
    def k(self) -> int:
        return self.states.shape[1]

    def separations(self) -> np.ndarray:
        return np.hypot(self.states[:, :, 0], self.states[:, :, 1])


@dataclass
class SimResult:
    captured: bool
    capturing_vehicle: int | None
    intercept_time: float
    miss_distance: float
    steps: int
    pn_steps: int
    convexity_warning_times: tuple[float, float] | None  # first and last warned time

    def summary(self) -> dict:
        """Plain-data view for exports; vehicles are numbered from 1 there."""
        vehicle = None if self.capturing_vehicle is None else self.capturing_vehicle + 1
        return {"captured": self.captured, "capturing_vehicle": vehicle,
                "intercept_time": self.intercept_time, "miss_distance": self.miss_distance,
                "steps": self.steps, "pn_steps": self.pn_steps,
                "convexity_warning_first": (self.convexity_warning_times or (None,))[0],
                "convexity_warning_last": (self.convexity_warning_times or (None, None))[1]}


def integrate_nonlinear(s, v_p: float, v_e: float, a_p: float, a_e: float,
                        dt: float) -> np.ndarray:
    """One Euler step of the relative model; the heading difference is re-wrapped."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    s = np.asarray(s, dtype=float)
    out = s + dt * nonlinear_derivative(s, v_p, v_e, a_p, a_e)
    out[2] = wrap_angle(out[2])
    return out


def run_closed_loop(cfg: ScenarioConfig, controls_override=None, until: float | None = None):
    """Simulate until capture or the horizon; returns ``(log, result)``.

    ``controls_override(t, states) -> (a_p, a_e)`` bypasses guidance and the
    autopilots (used for open-loop checks). ``until`` stops the run early without
    changing the horizon the guidance plans against.
    """
    k, dt = cfg.k, cfg.dt
    n_steps = int(round(min(cfg.horizon, until or cfg.horizon) * cfg.rate))
    states = np.array(cfg.initial_states, dtype=float)
    ap = AutopilotState.zeros(k)
    ctl = GuidanceController(cfg)
    rows = []
    a_cmd = np.zeros(k)
    achieved = np.zeros(k)
    a_e = 0.0
    cmd = None
    captured_by = None
    for n in range(n_steps + 1):
        t = n * dt
        sep = np.hypot(states[:, 0], states[:, 1])
        if np.any(sep <= cfg.r) or n == n_steps:
            if np.any(sep <= cfg.r):
                captured_by = int(np.argmin(sep))
            rows.append(_row(t, states, a_cmd, achieved, a_e, cmd, 0.0, k))
            break
        solve = 0.0
        if controls_override is not None:
            a_cmd, a_e = controls_override(t, states.copy())
            a_cmd = np.asarray(a_cmd, dtype=float)
            achieved = a_cmd.copy()
        else:
            cmd, a_e, solve, _ = ctl.step(states, t)
            a_cmd = cmd.a_p
            achieved, ap = autopilot_step(a_cmd, ap, dt, cfg.autopilot_tau)
        rows.append(_row(t, states, a_cmd, achieved, a_e, cmd, solve, k))
        states = np.array([integrate_nonlinear(states[i], cfg.v_p, cfg.v_e, achieved[i], a_e,
                                               dt) for i in range(k)])
    traj = _assemble(rows, k)
    reconstruct_inertial(traj, cfg)
    return traj, _result(traj, cfg, captured_by)


def _row(t, states, a_cmd, achieved, a_e, cmd, solve, k):
    if cmd is None:
        mode, argmin, phi, t_star, convex = np.zeros(k), -1, np.nan, np.nan, True
    else:
        mode = np.array([m is Mode.HOPF for m in cmd.mode], dtype=float)
        argmin = -1 if cmd.active_vehicle is None else cmd.active_vehicle
        phi, convex = cmd.phi, cmd.convex
        t_star = np.nan if cmd.t_star is None else cmd.t_star
    return (t, states.copy(), np.array(a_cmd, float), np.array(achieved, float), a_e, mode,
            argmin, phi, t_star, convex, solve)


def _assemble(rows, k) -> TrajectoryLog:
    cols = list(zip(*rows))
    return TrajectoryLog(
        time=np.array(cols[0]), states=np.array(cols[1]).reshape(-1, k, 3),
        a_cmd=np.array(cols[2]).reshape(-1, k), a_ach=np.array(cols[3]).reshape(-1, k),
        a_e=np.array(cols[4], dtype=float), mode=np.array(cols[5]).reshape(-1, k),
        argmin=np.array(cols[6], dtype=int), phi=np.array(cols[7], dtype=float),
        t_star=np.array(cols[8], dtype=float), convex=np.array(cols[9], dtype=bool),
        solve_time=np.array(cols[10], dtype=float))


def _result(traj: TrajectoryLog, cfg: ScenarioConfig, captured_by) -> SimResult:
    sep = traj.separations()
    captured = bool(np.any(sep <= cfg.r))
    if captured:
        j = int(np.argmax(np.any(sep <= cfg.r, axis=1)))
        intercept = float(traj.time[j])
    else:
        intercept = float(traj.time[int(np.argmin(sep.min(axis=1)))])
    # the final row carries copied guidance fields, so count modes on stepped rows
    stepped = traj.mode[:-1] if len(traj) > 1 else traj.mode
    pn_steps = int(np.sum(np.all(stepped == 0, axis=1)))
    warned = traj.time[:-1][~traj.convex[:-1]] if len(traj) > 1 else np.array([])
    warn = (float(warned[0]), float(warned[-1])) if len(warned) else None
    return SimResult(captured, captured_by if captured else None, intercept,
                     miss_distance(traj), len(traj), pn_steps, warn)


def miss_distance(traj: TrajectoryLog) -> float:
    """Closest planar approach over the run, refined on the segments either side of
    the closest sample by linear interpolation of the relative position."""
    if len(traj) == 0:
        raise ValueError("empty trajectory log")
    pos = traj.states[:, :, :2]
    sep = np.hypot(pos[..., 0], pos[..., 1])
    best = float(sep.min())
    for i in range(pos.shape[1]):
        j = int(np.argmin(sep[:, i]))
        for a, b in ((j - 1, j), (j, j + 1)):
            if a < 0 or b >= len(traj):
                continue
            best = min(best, _segment_distance(pos[a, i], pos[b, i]))
    return best


def _segment_distance(p0, p1) -> float:
    d = p1 - p0
    dd = float(d @ d)
    u = 0.0 if dd == 0 else float(np.clip(-(p0 @ d) / dd, 0.0, 1.0))
    return float(np.hypot(*(p0 + u * d)))


def reconstruct_inertial(traj: TrajectoryLog, cfg: ScenarioConfig) -> TrajectoryLog:
    """Fill the inertial tracks in place.

    The evader starts at the origin heading along +x and is stepped with the logged
    ``a_e`` history by the same Euler rule as the simulation. Each pursuer is the
    evader position plus its relative displacement rotated by the evader heading.
    """
    N = len(traj)
    if N == 0 or traj.a_e.shape != (N,) or traj.states.shape[0] != N:
        raise ReconstructionError("trajectory log is incomplete")
    if not np.all(np.isfinite(traj.a_e)):
        raise ReconstructionError("evader command history has gaps")
    dt = np.diff(traj.time)
    xy = np.zeros((N, 2))
    psi = np.zeros(N)
    for j in range(1, N):
        h = dt[j - 1]
        xy[j] = xy[j - 1] + h * cfg.v_e * np.array([np.cos(psi[j - 1]), np.sin(psi[j - 1])])
        psi[j] = psi[j - 1] + h * traj.a_e[j - 1] / cfg.v_e
    c, s = np.cos(psi), np.sin(psi)
    dx, dy = traj.states[:, :, 0], traj.states[:, :, 1]
    px = xy[:, 0, None] + c[:, None] * dx - s[:, None] * dy
    py = xy[:, 1, None] + s[:, None] * dx + c[:, None] * dy
    traj.evader_xy, traj.evader_heading = xy, psi
    traj.pursuer_xy = np.stack([px, py], axis=-1)
    return traj
