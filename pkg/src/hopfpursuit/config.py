"""Scenario configuration shared by guidance, simulation and the command line."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .hopf_solver import SolverOptions
from .lin_dynamics import (Aspect, BoundSchedule, ConfigurationError, ControlBoundSchedule,
                           build_joint_system)
from .reachability import GameModel


@dataclass(frozen=True)
class PNConfig:
    nav_constant: float = 4.0

    def __post_init__(self):
        if not self.nav_constant > 0:
            raise ConfigurationError(f"nav_constant must be positive (got {self.nav_constant})")


@dataclass(frozen=True)
class ScenarioConfig:
    """One closed-loop engagement.

    ``initial_states`` holds one ``(dx, dy, dtheta)`` per pursuer, expressed in the
    evader body frame (m, m, rad). ``horizon`` is the scenario duration in seconds and
    also the reachability search limit. ``decimation`` re-solves guidance every n-th
    step; ``rescan_interval`` forces a full search from zero at that period (seconds).
    """

    initial_states: tuple[tuple[float, float, float], ...]
    aspects: tuple[Aspect, ...]
    v_p: float
    v_e: float
    r: float
    q_p: BoundSchedule
    q_e: float
    horizon: float
    v_max: float = 1000.0
    rate: float = 120.0
    nav_constant: float = 4.0
    autopilot_tau: float = 0.2
    tolerance: float = 1e-6
    max_iter: int = 100
    h_max: float = 0.05
    scan_step: float = 0.1
    bisect_tol: float = 1e-4
    evader_inflation: float = 1.0
    decimation: int = 1
    rescan_interval: float = 1.0
    adaptive_aspect: bool = False
    name: str = "scenario"
    _models: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        try:
            object.__setattr__(self, "initial_states",
                               tuple(tuple(float(v) for v in s) for s in self.initial_states))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid scenario:\n  pursuer: {exc}") from None
        object.__setattr__(self, "aspects", tuple(self.aspects))
        problems = self.problems()
        if problems:
            raise ConfigurationError(
                "invalid scenario:\n  " + "\n  ".join(f"{k}: {m}" for k, m in problems))

    def problems(self) -> list[tuple[str, str]]:
        """Every violated constraint as ``(field, message)``."""
        out = []
        if not self.initial_states:
            out.append(("pursuer", "at least one pursuer is required"))
        if len(self.aspects) != len(self.initial_states):
            out.append(("pursuer", f"{len(self.aspects)} aspects for "
                                   f"{len(self.initial_states)} pursuers"))
        for i, s in enumerate(self.initial_states):
            if len(s) != 3 or not all(math.isfinite(v) for v in s):
                out.append(("pursuer", f"pursuer {i + 1}: state must be three finite numbers"))
        positive = ("v_p", "v_e", "r", "v_max", "horizon", "rate", "nav_constant",
                    "autopilot_tau", "tolerance", "h_max", "scan_step", "bisect_tol",
                    "evader_inflation", "rescan_interval")
        for key in positive:
            value = getattr(self, key)
            if not (_is_number(value) and math.isfinite(value) and value > 0):
                out.append((key, f"must be a positive number (got {value!r})"))
        if not (_is_number(self.q_e) and math.isfinite(self.q_e) and self.q_e >= 0):
            out.append(("q_e", f"must be a non-negative number (got {self.q_e!r})"))
        if not isinstance(self.q_p, BoundSchedule):
            out.append(("q_p", "must be a bound schedule"))
        for key in ("max_iter", "decimation"):
            value = getattr(self, key)
            if not (_is_number(value) and int(value) == value and value >= 1):
                out.append((key, f"must be a positive integer (got {value!r})"))
        if not isinstance(self.adaptive_aspect, bool):
            out.append(("adaptive_aspect", f"must be true or false (got {self.adaptive_aspect!r})"))
        return out

    @property
    def k(self) -> int:
        return len(self.initial_states)

    @property
    def dt(self) -> float:
        return 1.0 / self.rate

    @property
    def bounds(self) -> ControlBoundSchedule:
        return ControlBoundSchedule(self.q_p, self.q_e)

    @property
    def pn(self) -> PNConfig:
        return PNConfig(self.nav_constant)

    @property
    def model(self) -> GameModel:
        return self.model_for(self.aspects)

    def model_for(self, aspects) -> GameModel:
        """Game model for a given aspect per pursuer (cached)."""
        aspects = tuple(aspects)
        if aspects not in self._models:
            solver = SolverOptions(tolerance=self.tolerance, max_iter=self.max_iter)
            self._models[aspects] = GameModel(
                build_joint_system(aspects), self.bounds, self.r, self.v_max, solver,
                h_max=self.h_max, scan_step=self.scan_step, bisect_tol=self.bisect_tol,
                evader_inflation=self.evader_inflation)
        return self._models[aspects]

    def aspects_at(self, states) -> tuple[Aspect, ...]:
        """Configured aspects, or with ``adaptive_aspect`` the aspect each pursuer's
        current heading difference is closer to."""
        if not self.adaptive_aspect:
            return self.aspects
        return tuple(Aspect.TAIL_CHASE if math.cos(s[2]) >= 0 else Aspect.HEAD_ON
                     for s in states)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)
