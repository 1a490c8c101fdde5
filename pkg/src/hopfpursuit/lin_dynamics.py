"""Pursuit-evasion kinematics: the nonlinear relative model, its double-integrator
linearization, the stacked k-pursuer game system and ellipsoidal capture sets.

States are plain numpy arrays:

* nonlinear relative state, shape (3,): ``[dx, dy, dtheta]`` of a pursuer expressed
  in the evader's body frame;
* linear relative state, shape (4,): ``[dx, dy, dvx, dvy]``;
* joint state, shape (4k,): the k linear states stacked in pursuer order.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg


class ConfigurationError(ValueError):
    """Raised for invalid model or scenario parameters."""


class Aspect(enum.Enum):
    TAIL_CHASE = 1
    HEAD_ON = -1

    @classmethod
    def parse(cls, text: str) -> "Aspect":
        key = text.strip().lower().replace("-", "_")
        aliases = {"tail": cls.TAIL_CHASE, "tail_chase": cls.TAIL_CHASE,
                   "tailchase": cls.TAIL_CHASE, "head": cls.HEAD_ON,
                   "head_on": cls.HEAD_ON, "headon": cls.HEAD_ON}
        if key not in aliases:
            raise ConfigurationError(f"unknown engagement aspect {text!r}")
        return aliases[key]

    @property
    def label(self) -> str:
        return "tail" if self is Aspect.TAIL_CHASE else "head"


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2 * np.pi)
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return wrapped if np.ndim(wrapped) else float(wrapped)


# --------------------------------------------------------------------------- systems


@dataclass(frozen=True)
class SystemMatrices:
    """Single-vehicle blocks (A, B, D) and the joint game matrices.

    For a single vehicle the joint matrices coincide with the blocks. ``B`` and ``D``
    are stored as (4, 1) columns; ``B`` is the column of the first pursuer.
    """

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    D_hat: np.ndarray
    aspects: tuple[Aspect, ...]

    @property
    def k(self) -> int:
        return len(self.aspects)

    @property
    def n(self) -> int:
        return 4 * self.k

    @property
    def signs(self) -> np.ndarray:
        return np.array([a.value for a in self.aspects], dtype=float)


def _single_blocks(aspect: Aspect):
    A = np.zeros((4, 4))
    A[0, 2] = A[1, 3] = 1.0
    B = np.zeros((4, 1))
    B[3, 0] = float(aspect.value)
    D = np.zeros((4, 1))
    D[3, 0] = -1.0
    return A, B, D


def build_single_system(aspect: Aspect) -> SystemMatrices:
    A, B, D = _single_blocks(aspect)
    return SystemMatrices(A, B, D, A.copy(), B.copy(), D.copy(), (aspect,))


def build_joint_system(aspects: Sequence[Aspect]) -> SystemMatrices:
    aspects = tuple(aspects)
    k = len(aspects)
    if k < 1:
        raise ConfigurationError("a joint system needs at least one pursuer")
    A, _, D = _single_blocks(aspects[0])
    A_hat = np.kron(np.eye(k), A)
    B_hat = np.zeros((4 * k, k))
    for i, aspect in enumerate(aspects):
        B_hat[4 * i + 3, i] = float(aspect.value)
    D_hat = np.tile(D, (k, 1))
    return SystemMatrices(A, B_hat[:4, :1].copy(), D, A_hat, B_hat, D_hat, aspects)


def expm_joint(m: SystemMatrices, t: float, debug: bool = False) -> np.ndarray:
    """``exp(t * A_hat)``.

    ``A_hat`` is nilpotent of index two, so the series stops after the linear term and
    the result is exact for every t (negative t included). With ``debug`` the closed
    form is cross-checked against scipy's scaling-and-squaring ``expm``.
    """
    E = np.eye(m.n) + t * m.A_hat
    if debug:
        ref = scipy.linalg.expm(t * m.A_hat)
        err = np.max(np.abs(ref - E))
        if err > 1e-9 * max(1.0, abs(t)):
            raise AssertionError(f"closed-form exponential disagrees with expm: {err:.3e}")
    return E


def transform_to_z(x: np.ndarray, t: float, m: SystemMatrices) -> np.ndarray:
    return expm_joint(m, -t) @ np.asarray(x, dtype=float)


def transform_to_x(z: np.ndarray, t: float, m: SystemMatrices) -> np.ndarray:
    return expm_joint(m, t) @ np.asarray(z, dtype=float)


# --------------------------------------------------------------------------- nonlinear model


def nonlinear_derivative(s, v_p: float, v_e: float, a_p: float, a_e: float) -> np.ndarray:
    """Time derivative of ``[dx, dy, dtheta]`` for one pursuer in the evader frame.

    ``a_p`` and ``a_e`` are lateral accelerations (left positive) of pursuer and evader.
    """
    if v_p == 0 or v_e == 0:
        raise ZeroDivisionError("vehicle speeds must be nonzero")
    dx, dy, dth = s
    turn_e = a_e / v_e
    return np.array([
        v_p * np.cos(dth) - v_e + dy * turn_e,
        v_p * np.sin(dth) - dx * turn_e,
        a_p / v_p - turn_e,
    ])


def linear_state(s, v_p: float, v_e: float) -> np.ndarray:
    """Map ``[dx, dy, dtheta]`` to ``[dx, dy, dvx, dvy]``.

    The velocity pair is the inertial relative velocity resolved in the evader frame;
    frame rotation terms are dropped, as in the linear model.
    """
    dx, dy, dth = s
    return np.array([dx, dy, v_p * np.cos(dth) - v_e, v_p * np.sin(dth)])


def joint_linear_state(states, v_p: float, v_e: float) -> np.ndarray:
    return np.concatenate([linear_state(s, v_p, v_e) for s in states])


# --------------------------------------------------------------------------- capture set


@dataclass(frozen=True)
class CaptureSet:
    """Ellipsoid ``{chi : <chi, W_i^-1 chi> <= 1}`` for capture by pursuer ``i`` (0-based)."""

    r: float
    v_max: float
    k: int
    i: int
    W: np.ndarray = field(repr=False)
    W_i: np.ndarray = field(repr=False)

    @property
    def W_i_inv(self) -> np.ndarray:
        return np.diag(1.0 / np.diag(self.W_i))

    def membership(self, chi) -> float:
        chi = np.asarray(chi, dtype=float)
        return float(chi @ (chi / np.diag(self.W_i)))

    def contains(self, chi) -> bool:
        return self.membership(chi) <= 1.0


def build_capture_set(r: float, v_max: float, k: int = 1, i: int = 0) -> CaptureSet:
    problems = []
    if not r > 0:
        problems.append(f"capture radius r must be positive (got {r})")
    if not v_max > 0:
        problems.append(f"v_max must be positive (got {v_max})")
    if k < 1 or not 0 <= i < k:
        problems.append(f"vehicle index {i} out of range for k={k}")
    if problems:
        raise ConfigurationError("; ".join(problems))
    W = np.diag([r**2, r**2, v_max**2, v_max**2])
    diag = np.full(4 * k, v_max**2)
    diag[4 * i:4 * i + 4] = np.diag(W)
    return CaptureSet(float(r), float(v_max), k, i, W, np.diag(diag))


# --------------------------------------------------------------------------- control bounds


class BoundSchedule:
    """Pursuer acceleration bound as a function of engagement time."""

    kind = "abstract"

    def __call__(self, t: float) -> float:
        raise NotImplementedError

    def sample(self, t) -> np.ndarray:
        return np.array([self(float(v)) for v in np.atleast_1d(t)])


@dataclass(frozen=True)
class ConstantBound(BoundSchedule):
    value: float
    kind = "constant"

    def __call__(self, t: float) -> float:
        return float(self.value)

    def sample(self, t) -> np.ndarray:
        return np.full(np.shape(np.atleast_1d(t)), float(self.value))


@dataclass(frozen=True)
class TableBound(BoundSchedule):
    """Piecewise-linear table of ``(time, bound)`` knots, held constant outside."""

    times: tuple[float, ...]
    values: tuple[float, ...]
    kind = "table"

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ConfigurationError("bound table needs matching, non-empty time/value lists")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("bound table times must be strictly increasing")
        if min(self.values) < 0:
            raise ConfigurationError("bound table values must be non-negative")

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def sample(self, t) -> np.ndarray:
        return np.interp(np.atleast_1d(t), self.times, self.values)


@dataclass(frozen=True)
class ParabolicBound(BoundSchedule):
    """``(t - t0)^2 / scale`` for ``t <= t0`` and zero afterwards."""

    t0: float
    scale: float
    kind = "parabolic"

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigurationError("parabolic bound scale must be positive")

    def __call__(self, t: float) -> float:
        return float(self.sample(t)[0])

    def sample(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.where(t <= self.t0, (t - self.t0) ** 2 / self.scale, 0.0)


@dataclass(frozen=True)
class ControlBoundSchedule:
    """Symmetric bounds: every pursuer uses ``q_p(t)``; the evader a constant ``q_e``."""

    q_p: BoundSchedule
    q_e: float

    def __post_init__(self):
        if self.q_e < 0:
            raise ConfigurationError("evader bound q_e must be non-negative")

    def pursuer(self, t: float, k: int) -> np.ndarray:
        return np.full(k, self.q_p(t))

    def pursuer_samples(self, t) -> np.ndarray:
        return self.q_p.sample(t)


def as_schedule(q_p) -> BoundSchedule:
    if isinstance(q_p, BoundSchedule):
        return q_p
    if callable(q_p):
        return _CallableBound(q_p)
    return ConstantBound(float(q_p))


@dataclass(frozen=True)
class _CallableBound(BoundSchedule):
    fn: Callable[[float], float]
    kind = "callable"

    def __call__(self, t: float) -> float:
        return float(self.fn(t))
