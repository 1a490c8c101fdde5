"""Single-pursuer oracle: minimum time-to-reach against the closed form, and the
first-order convergence of the value in the quadrature step."""
import argparse
from dataclasses import dataclass

import numpy as np

from hopfpursuit.lin_dynamics import (Aspect, ConstantBound, ControlBoundSchedule,
                                      build_joint_system)
from hopfpursuit.reachability import GameModel, min_time_to_reach, union_value


@dataclass
class OracleConfig:
    offset: float = 100.0
    q_p: float = 10.0
    r: float = 3.0
    steps: tuple[float, ...] = (0.05, 0.025, 0.0125, 0.00625)


def main(oc: OracleConfig):
    system = build_joint_system([Aspect.TAIL_CHASE])
    bounds = ControlBoundSchedule(ConstantBound(oc.q_p), 0.0)
    x0 = np.array([0.0, oc.offset, 0.0, 0.0])
    exact = np.sqrt(2 * (oc.offset - oc.r) / oc.q_p)
    res = min_time_to_reach(x0, 10.0, GameModel(system, bounds, oc.r, 1e6))
    print(f"T* = {res.t_star:.6f}   closed form {exact:.6f}   "
          f"rel err {abs(res.t_star - exact) / exact:.2e}")
    # the value at the exact time converges to zero at first order in h
    phis = [union_value(x0, exact, GameModel(system, bounds, oc.r, 1e6, h_max=h, n_min=1)).phi
            for h in oc.steps]
    for h, phi, prev in zip(oc.steps, phis, [None] + phis[:-1]):
        ratio = "" if prev is None else f"   ratio {phi / prev:.3f}"
        print(f"h = {h:<8g} phi(T_exact) = {phi: .3e}{ratio}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--offset", type=float, default=100.0)
    main(OracleConfig(ap.parse_args().offset))
