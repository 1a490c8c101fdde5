"""Per-step guidance latency: warm-started steps versus a full reachability rescan."""
import argparse
import statistics
import time
from dataclasses import dataclass

import numpy as np

from hopfpursuit.cli_io import load_scenario
from hopfpursuit.guidance import guidance_step


@dataclass
class LatencyConfig:
    scenario: str = "example1"
    reps: int = 100
    cold_reps: int = 10


def _time(fn, reps):
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return np.array(out)


def main(lc: LatencyConfig):
    cfg = load_scenario(lc.scenario)
    states = np.array(cfg.initial_states)
    first = guidance_step(states, 0.0, cfg)  # triggers compilation
    hint = first.reach.t_star - cfg.dt if first.reach.reachable else None
    hinted = _time(lambda: guidance_step(states, 0.0, cfg, hint=hint), lc.reps)
    cold = _time(lambda: guidance_step(states, 0.0, cfg), lc.cold_reps)
    for label, xs in (("hinted", hinted), ("rescan", cold)):
        print(f"{label:>7}: median {1e3 * statistics.median(xs):7.1f} ms   "
              f"p95 {1e3 * np.percentile(xs, 95):7.1f} ms   n={xs.size}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenario", nargs="?", default="example1")
    ap.add_argument("--reps", type=int, default=100)
    a = ap.parse_args()
    main(LatencyConfig(a.scenario, a.reps))
