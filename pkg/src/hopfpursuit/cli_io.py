"""Scenario files, trajectory export and the command-line entry point.

Scenario files are ``key = value`` lines; ``#`` starts a comment. Each pursuer is one
``pursuer = dx dy dtheta aspect`` line (metres, metres, radians or ``<n>deg``,
``tail``/``head``). The pursuer bound ``q_p`` is one of::

    q_p = constant 10
    q_p = table 0:40 40:0          # (time:bound) knots, linear interpolation
    q_p = parabolic 40 40          # (t - t0)^2 / scale for t <= t0, then 0
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .lin_dynamics import (Aspect, BoundSchedule, ConfigurationError, ConstantBound,
                           ParabolicBound, TableBound, joint_linear_state)

log = logging.getLogger(__name__)

REQUIRED = ("v_p", "v_e", "r", "q_p", "q_e", "horizon")
FLOAT_KEYS = ("v_p", "v_e", "r", "v_max", "q_e", "horizon", "rate", "nav_constant",
              "autopilot_tau", "tolerance", "h_max", "scan_step", "bisect_tol",
              "evader_inflation", "rescan_interval")
INT_KEYS = ("max_iter", "decimation")
BOOL_KEYS = ("adaptive_aspect",)
SHIPPED = ("example1", "example2", "oracle")
FLOAT_FMT = "{:.12g}"


class ScenarioParseError(ConfigurationError):
    """Carries every problem found, each as ``(line or None, message)``."""

    def __init__(self, problems, source="<scenario>"):
        self.problems = list(problems)
        self.source = source
        lines = [f"{source}:{ln}: {msg}" if ln else f"{source}: {msg}"
                 for ln, msg in self.problems]
        super().__init__("\n".join(lines))


# --------------------------------------------------------------------------- parsing


def _number(text: str) -> float:
    text = text.strip()
    if text.endswith("deg"):
        return math.radians(float(text[:-3]))
    return float(text)


def _boolean(text: str) -> bool:
    word = text.strip().lower()
    if word in ("true", "yes", "on", "1"):
        return True
    if word in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true or false, got {text.strip()!r}")


def parse_schedule(text: str) -> BoundSchedule:
    parts = text.split()
    if not parts:
        raise ValueError("empty bound schedule")
    kind, args = parts[0].lower(), parts[1:]
    if kind == "constant" and len(args) == 1:
        return ConstantBound(float(args[0]))
    if kind == "parabolic" and len(args) == 2:
        return ParabolicBound(float(args[0]), float(args[1]))
    if kind == "table" and args:
        knots = [a.split(":") for a in args]
        if any(len(k) != 2 for k in knots):
            raise ValueError("table knots must be written time:bound")
        return TableBound(tuple(float(t) for t, _ in knots), tuple(float(v) for _, v in knots))
    raise ValueError(f"bad bound schedule {text!r}; expected 'constant v', "
                     "'table t:v ...' or 'parabolic t0 scale'")


def format_schedule(q: BoundSchedule) -> str:
    if isinstance(q, ConstantBound):
        return f"constant {q.value!r}"
    if isinstance(q, ParabolicBound):
        return f"parabolic {q.t0!r} {q.scale!r}"
    if isinstance(q, TableBound):
        return "table " + " ".join(f"{t!r}:{v!r}" for t, v in zip(q.times, q.values))
    raise ConfigurationError(f"cannot serialize bound schedule of kind {q.kind!r}")


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioConfig:
    """Parse and validate; raises ``ScenarioParseError`` listing every problem."""
    problems: list[tuple[int | None, str]] = []
    values: dict = {}
    where: dict[str, int] = {}
    states, aspects = [], []
    known = set(FLOAT_KEYS) | set(INT_KEYS) | set(BOOL_KEYS) | {"q_p", "name", "pursuer"}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append((ln, f"expected 'key = value', got {raw.strip()!r}"))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            problems.append((ln, f"unknown key {key!r}"))
            continue
        if key != "pursuer" and key in where:
            problems.append((ln, f"duplicate key {key!r} (first on line {where[key]})"))
            continue
        where.setdefault(key, ln)
        try:
            if key == "pursuer":
                parts = value.split()
                if len(parts) != 4:
                    raise ValueError("expected 'dx dy dtheta aspect'")
                states.append(tuple(_number(p) for p in parts[:3]))
                aspects.append(Aspect.parse(parts[3]))
            elif key == "q_p":
                values[key] = parse_schedule(value)
            elif key == "name":
                values[key] = value
            elif key in INT_KEYS:
                values[key] = int(value)
            elif key in BOOL_KEYS:
                values[key] = _boolean(value)
            else:
                values[key] = _number(value)
        except (ValueError, ConfigurationError) as exc:
            problems.append((ln, f"{key}: {exc}"))
    for key in REQUIRED:
        if key not in values and not any(ln == where.get(key) for ln, _ in problems):
            problems.append((None, f"missing required key {key!r}"))
    if not states and "pursuer" not in where:
        problems.append((None, "missing required key 'pursuer'"))
    if problems:
        raise ScenarioParseError(problems, source)
    cfg_kwargs = dict(values, initial_states=tuple(states), aspects=tuple(aspects))
    probe = _unchecked(cfg_kwargs)
    found = probe.problems()
    if found:
        raise ScenarioParseError([(where.get(k), f"{k}: {m}") for k, m in found], source)
    return ScenarioConfig(**cfg_kwargs)


def _unchecked(kwargs) -> ScenarioConfig:
    """Instance without validation, to collect every problem at once."""
    cfg = object.__new__(ScenarioConfig)
    for f in dataclasses.fields(ScenarioConfig):
        if f.init:
            default = f.default if f.default is not dataclasses.MISSING else None
            object.__setattr__(cfg, f.name, kwargs.get(f.name, default))
    object.__setattr__(cfg, "aspects", tuple(kwargs.get("aspects", ())))
    return cfg


def serialize_scenario(cfg: ScenarioConfig) -> str:
    """Text that ``parse_scenario`` maps back to an equal config."""
    out = [f"name = {cfg.name}"]
    for key in FLOAT_KEYS:
        out.append(f"{key} = {float(getattr(cfg, key))!r}")
    for key in INT_KEYS:
        out.append(f"{key} = {int(getattr(cfg, key))}")
    for key in BOOL_KEYS:
        out.append(f"{key} = {str(bool(getattr(cfg, key))).lower()}")
    out.append(f"q_p = {format_schedule(cfg.q_p)}")
    for s, a in zip(cfg.initial_states, cfg.aspects):
        out.append("pursuer = " + " ".join(repr(float(v)) for v in s) + f" {a.label}")
    return "\n".join(out) + "\n"


def load_scenario(name_or_path: str) -> ScenarioConfig:
    """A shipped scenario by name or a file path."""
    if name_or_path in SHIPPED:
        text = resources.files("hopfpursuit.scenarios").joinpath(
            f"{name_or_path}.cfg").read_text()
        return parse_scenario(text, name_or_path)
    path = Path(name_or_path)
    return parse_scenario(path.read_text(), str(path))


# --------------------------------------------------------------------------- export


def trajectory_header(k: int) -> list[str]:
    cols = ["time"]
    for i in range(1, k + 1):
        cols += [f"dx_{i}", f"dy_{i}", f"dvx_{i}", f"dvy_{i}", f"dtheta_{i}",
                 f"a_cmd_{i}", f"a_ach_{i}", f"mode_{i}"]
    cols += ["a_e", "argmin", "phi", "t_star"]
    for i in range(1, k + 1):
        cols += [f"px_{i}", f"py_{i}"]
    cols += ["ex", "ey"]
    return cols


def export_trajectory(traj, cfg: ScenarioConfig, stream) -> int:
    """Write the CSV export; returns the number of data rows."""
    fmt = FLOAT_FMT.format
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(trajectory_header(cfg.k))
    for j in range(len(traj)):
        lin = joint_linear_state(traj.states[j], cfg.v_p, cfg.v_e).reshape(cfg.k, 4)
        row = [fmt(traj.time[j])]
        for i in range(cfg.k):
            row += [fmt(v) for v in lin[i]]
            row += [fmt(traj.states[j, i, 2]), fmt(traj.a_cmd[j, i]), fmt(traj.a_ach[j, i]),
                    "Hopf" if traj.mode[j, i] else "PN"]
        argmin = traj.argmin[j]
        row += [fmt(traj.a_e[j]), str(argmin + 1) if argmin >= 0 else "",
                fmt(traj.phi[j]), "" if np.isnan(traj.t_star[j]) else fmt(traj.t_star[j])]
        for i in range(cfg.k):
            row += [fmt(traj.pursuer_xy[j, i, 0]), fmt(traj.pursuer_xy[j, i, 1])]
        row += [fmt(traj.evader_xy[j, 0]), fmt(traj.evader_xy[j, 1])]
        writer.writerow(row)
    return len(traj)


# --------------------------------------------------------------------------- commands


def _run_variant(cfg: ScenarioConfig) -> dict:
    from .sim import run_closed_loop
    _, res = run_closed_loop(cfg)
    return res.summary()


def _cmd_run(args) -> int:
    from .sim import run_closed_loop
    cfg = load_scenario(args.scenario)
    traj, res = run_closed_loop(cfg)
    summary = res.summary()
    summary["scenario"] = cfg.name
    if args.out:
        out = Path(args.out)
        with out.open("w", newline="") as fh:
            export_trajectory(traj, cfg, fh)
        out.with_suffix(".summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for key, value in summary.items():
        print(f"{key} = {value}")
    return 0


def _cmd_reach(args) -> int:
    from .reachability import min_time_to_reach, union_value
    cfg = load_scenario(args.scenario)
    if args.state:
        cfg = dataclasses.replace(cfg, initial_states=tuple(tuple(s) for s in args.state))
    x0 = joint_linear_state(cfg.initial_states, cfg.v_p, cfg.v_e)
    model = cfg.model
    if args.time is not None:
        if args.time < 0:
            raise ConfigurationError("--time must be non-negative")
        u = union_value(x0, args.time, model)
        print(f"time = {FLOAT_FMT.format(args.time)}")
        print(f"phi = {FLOAT_FMT.format(u.phi)}")
        for i, v in enumerate(u.phi_i, start=1):
            print(f"phi_{i} = {FLOAT_FMT.format(v)}")
        print(f"argmin = {u.argmin_index + 1}")
        return 0
    res = min_time_to_reach(x0, cfg.horizon, model)
    print(f"reachable = {res.reachable}")
    print(f"t_star = {'' if res.t_star is None else FLOAT_FMT.format(res.t_star)}")
    print(f"phi = {FLOAT_FMT.format(res.phi_at_t_star)}")
    u = union_value(x0, res.horizon, model)
    for i, v in enumerate(u.phi_i, start=1):
        print(f"phi_{i} = {FLOAT_FMT.format(v)}")
    print(f"argmin = {res.active_vehicle + 1}")
    return 0


def _sweep_value(key: str, text: str):
    if key == "q_p":
        return parse_schedule(text)
    if key in INT_KEYS:
        return int(text)
    if key in FLOAT_KEYS:
        return _number(text)
    if key in BOOL_KEYS:
        return _boolean(text)
    raise ConfigurationError(f"cannot sweep {key!r}; sweepable keys: "
                             + ", ".join(FLOAT_KEYS + INT_KEYS + BOOL_KEYS + ("q_p",)))


def _cmd_sweep(args) -> int:
    base = load_scenario(args.scenario)
    variants = [dataclasses.replace(base, **{args.param: _sweep_value(args.param, v)})
                for v in args.values]
    fields = ["value", "captured", "capturing_vehicle", "intercept_time", "miss_distance",
              "steps", "pn_steps", "convexity_warning_first", "convexity_warning_last",
              "error"]
    stream = open(args.out, "w", newline="") if args.out else sys.stdout
    status = 0
    try:
        writer = csv.DictWriter(stream, fields, lineterminator="\n")
        writer.writeheader()
        stream.flush()
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_run_variant, v) for v in variants]
            for text, fut in zip(args.values, futures):
                try:
                    row = dict(fut.result(), value=text, error="")
                except Exception as exc:  # one failed variant must not lose the others
                    row = {"value": text, "error": f"{type(exc).__name__}: {exc}"}
                    status = 2
                writer.writerow({k: _cell(row.get(k)) for k in fields})
                stream.flush()
    finally:
        if stream is not sys.stdout:
            stream.close()
    return status


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return FLOAT_FMT.format(v)
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hopfpursuit",
                                description="Time-optimal cooperative pursuit guidance.")
    p.add_argument("--seedless", action="store_true",
                   help="accepted for reproducibility scripts; the pipeline has no randomness")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver warnings")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="closed-loop simulation")
    run.add_argument("scenario", help=f"scenario file or one of {', '.join(SHIPPED)}")
    run.add_argument("--out", help="trajectory CSV path (summary goes to .summary.json)")
    reach = sub.add_parser("reach", help="value function and minimum time-to-reach")
    reach.add_argument("scenario")
    reach.add_argument("--state", nargs=3, type=_number, action="append",
                       metavar=("DX", "DY", "DTHETA"),
                       help="override a pursuer's initial state (repeat per pursuer)")
    reach.add_argument("--time", type=float, help="evaluate phi at this time only")
    sweep = sub.add_parser("sweep", help="batch runs over one parameter")
    sweep.add_argument("scenario")
    sweep.add_argument("--param", required=True)
    sweep.add_argument("--values", nargs="+", required=True)
    sweep.add_argument("--out", help="summary CSV (default stdout)")
    sweep.add_argument("--workers", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    commands = {"run": _cmd_run, "reach": _cmd_reach, "sweep": _cmd_sweep}
    try:
        return commands[args.command](args)
    except (ConfigurationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
