"""Command line front end.

    nlrecover run CONFIG [--seed S] [--tol T] [--max-iters N] [--out DIR]
    nlrecover certify [--trials N] [--seed S]
    nlrecover info SCENARIO

A run configuration is an INI-style file with a single section named after
the scenario, e.g.::

    [thresholded_products]
    preset = desk
    seed = 3
    tol = 1e-9

Besides the scenario parameters (see ``nlrecover info``), the keys
``preset``, ``mode`` (``solve`` or ``relaxed``), ``lambda_mode``
(``emopsp`` or ``constant``), ``lambda``, ``relaxed_lambda`` and
``output_dir`` are accepted.
"""
from __future__ import annotations

import argparse
import configparser
import inspect
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import io as nio
from .certify import run_catalog
from .scenarios import BUILDERS, PRESETS, build, relative_error
from .solver import RelaxationPolicy, solve, solve_relaxed

RUN_KEYS = {"preset", "mode", "lambda_mode", "lambda", "relaxed_lambda", "output_dir"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str
    overrides: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    preset: str = "desk"
    mode: str = "solve"
    lambda_mode: str = "emopsp"
    lam: float = 1.0
    relaxed_lambda: float = 1.0


def scenario_keys(name: str) -> dict:
    """Parameter name -> default for scenario ``name``."""
    sig = inspect.signature(BUILDERS[name])
    return {k: p.default for k, p in sig.parameters.items()}


def _convert(key: str, raw: str, default):
    raw = raw.strip()
    try:
        if default is None or key == "rho":
            return None if raw.lower() in ("none", "auto") else float(raw)
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse value {raw!r}") from None
    return raw


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: expected a [scenario] section header") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{source}:{lineno}: cannot parse {line.strip()!r}") from None
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", "?")
        raise ConfigError(f"{source}:{lineno}: {exc.message}") from None

    sections = parser.sections()
    if len(sections) != 1:
        raise ConfigError(f"{source}: expected exactly one scenario section, found {len(sections)}")
    name = sections[0]
    if name not in BUILDERS:
        raise ConfigError(f"{source}: unknown scenario {name!r}; choose from {sorted(BUILDERS)}")
    known = scenario_keys(name)
    cfg = RunConfig(name)
    for key, raw in parser.items(name):
        if key in RUN_KEYS:
            v = raw.strip()
            if key == "preset":
                if v not in PRESETS[name]:
                    raise ConfigError(f"key 'preset': unknown preset {v!r}")
                cfg.preset = v
            elif key == "mode":
                if v not in ("solve", "relaxed"):
                    raise ConfigError("key 'mode' must be 'solve' or 'relaxed'")
                cfg.mode = v
            elif key == "lambda_mode":
                if v not in ("emopsp", "constant"):
                    raise ConfigError("key 'lambda_mode' must be 'emopsp' or 'constant'")
                cfg.lambda_mode = v
            elif key == "lambda":
                cfg.lam = _convert(key, v, 1.0)
            elif key == "relaxed_lambda":
                cfg.relaxed_lambda = _convert(key, v, 1.0)
            else:
                cfg.output_dir = Path(v)
        elif key in known:
            cfg.overrides[key] = _convert(key, raw, known[key])
        else:
            raise ConfigError(f"unknown key {key!r} for scenario {name!r}")
    return cfg


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_run_config(path.read_text(), str(path))


def execute(cfg: RunConfig, log=print) -> dict:
    """Build, solve and write every output of a run; returns the summary."""
    try:
        sc = build(cfg.scenario, cfg.preset, **cfg.overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters for {cfg.scenario}: {exc}") from None
    if cfg.lambda_mode == "constant":
        if not 0 < cfg.lam <= 1:
            raise ConfigError("constant lambda must lie in (0, 1] to stay admissible for every Lambda_n >= 1")
        sc.config.relaxation = RelaxationPolicy.constant(cfg.lam)
    if cfg.mode == "relaxed":
        if any(op.kind != "projector" for op in sc.problem.constraints):
            raise ConfigError(f"relaxed mode needs exact projectors; {cfg.scenario} uses subgradient projectors")
        if not 0 < cfg.relaxed_lambda < 2:
            raise ConfigError("relaxed_lambda must lie in (0, 2)")
        x, trace = solve_relaxed(sc.problem, lam=cfg.relaxed_lambda, tol=sc.config.tol,
                                 max_iters=sc.config.max_iters, reference=sc.ground_truth)
    else:
        x, trace = solve(sc.problem, sc.config, reference=sc.ground_truth)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    nio.write_tensor(out / "solution", x)
    nio.write_tensor(out / "ground_truth", sc.ground_truth)
    for key, obs in sc.observations.items():
        nio.write_tensor(out / f"observation_{key}", obs)
    trace.to_csv(out / "trace.csv")

    disp = sc.displacement_norms(x)
    summary = {
        "scenario": sc.name,
        "mode": cfg.mode,
        "iterations": trace.iterations,
        "converged": trace.converged,
        "residual": max(disp.values()),
        "relative_error": relative_error(x, sc.ground_truth),
    }
    summary.update(sc.evaluate(x))
    summary.update({f"param_{k}": v for k, v in sc.params.items()})
    with open(out / "summary.txt", "w") as fh:
        for k, v in summary.items():
            fh.write(f"{k}: {json.dumps(v)}\n")
    log(f"{sc.name}: {trace.iterations} iterations, converged={trace.converged}, "
        f"residual={summary['residual']:.3e}; outputs in {out}")
    return summary


def cmd_run(args) -> int:
    try:
        cfg = load_run_config(args.config)
        for flag, key in (("seed", "seed"), ("tol", "tol"), ("max_iters", "max_iters")):
            val = getattr(args, flag)
            if val is not None:
                cfg.overrides[key] = val
        if args.out is not None:
            cfg.output_dir = Path(args.out)
        execute(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_certify(args) -> int:
    extra = []
    if args.inject_expansive:
        extra.append(("2 Id (injected)", lambda x: 2.0 * x, (16,), 1.0))
    reports = run_catalog(seed=args.seed, trials=args.trials, extra=extra)
    for rep in reports:
        print(rep.row())
    failed = sum(not r.passed for r in reports)
    print(f"{len(reports) - failed}/{len(reports)} checks passed")
    return 0 if failed == 0 else 1


def cmd_info(args) -> int:
    name = args.scenario
    if name not in BUILDERS:
        print(f"error: unknown scenario {name!r}; choose from {sorted(BUILDERS)}", file=sys.stderr)
        return 2
    doc = inspect.getdoc(BUILDERS[name]) or ""
    print(f"{name}: {doc.splitlines()[0] if doc else ''}")
    print("parameters (default):")
    for k, v in scenario_keys(name).items():
        print(f"  {k} = {v}")
    for preset, vals in PRESETS[name].items():
        print(f"preset {preset}: " + ", ".join(f"{k}={v}" for k, v in vals.items()))
    print("run keys: " + ", ".join(sorted(RUN_KEYS)))
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlrecover", description="Fixed point recovery from nonlinear observations.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve a configured scenario")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--tol", type=float)
    r.add_argument("--max-iters", dest="max_iters", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("certify", help="check the operator catalog numerically")
    c.add_argument("--trials", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--inject-expansive", action="store_true", help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_certify)

    i = sub.add_parser("info", help="describe a scenario and its parameters")
    i.add_argument("scenario")
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
