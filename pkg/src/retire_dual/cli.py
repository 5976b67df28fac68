"""Command-line front end: ``solve``, ``sweep``, ``simulate`` and ``verify``.

Exit codes: 0 success, 1 verification failure, 2 config or validation
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .config import config_hash, load_config, params_from_config, timestamp, write_json
from .errors import NumericalError, ParameterError, SolverError
from .model import SolvedModel, solve
from .params import ModelParams
from .policy import GridSpec, Phase, default_grid, fmt, policy_table, write_policy_csv
from .simulator import SimConfig, budget_check, simulate_paths, solver_threads, write_paths_csv
from .verification import VerifySettings, report, run_checks

log = logging.getLogger("retire_dual")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
SWEEPABLE = ("r", "mu", "sigma", "rho", "gamma", "delta", "y1", "y2", "L", "I")


def _effective_config(args: argparse.Namespace) -> dict[str, Any]:
    cfg = load_config(args.config)
    if getattr(args, "tie_delta_to_k", False):
        cfg["tie_delta_to_k"] = True
    if getattr(args, "seed", None) is not None:
        cfg.setdefault("simulation", {})
        cfg["simulation"] = dict(cfg["simulation"], master_seed=args.seed)
    return cfg


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def solution_summary(m: SolvedModel) -> dict[str, Any]:
    p = m.params
    b = m.boundary
    summary: dict[str, Any] = {
        "regime": b.regime.value,
        "j": b.j,
        "z_bar": b.z_bar,
        "w_bar": b.w_bar,
        "threshold_residual": b.residual,
    }
    if b.z_bar is not None:
        summary["z_bar_above_kink"] = b.z_bar >= p.kink
        summary["w_bar_positive"] = b.w_bar > 0
    return summary


def resolved_params(p: ModelParams, m: SolvedModel | None = None) -> dict[str, Any]:
    out = p.to_raw()
    out.update(
        theta=p.theta,
        K=p.K,
        k_dual=p.k_dual,
        L=p.L,
        I=p.subsidy,
        kink=p.kink,
        delta_tied_to_k=p.delta_tied_to_k,
        delta_equals_k=p.delta_equals_k,
        regime_tol=p.regime_tol,
    )
    if m is not None:
        out.update(m_plus=m.roots.m_plus, m_minus=m.roots.m_minus, A=m.dual.A, B=m.dual.B)
    return out


def manifest(cfg: dict[str, Any], p: ModelParams, m: SolvedModel, outputs: list[str]) -> dict[str, Any]:
    return {
        "tool": "retire-dual",
        "version": __version__,
        "config_sha256": config_hash(cfg),
        "created_at": timestamp(),
        "config": cfg,
        "params": resolved_params(p, m),
        **solution_summary(m),
        "outputs": outputs,
    }


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    p = params_from_config(cfg)
    m = solve(p)
    out = _out_dir(args)
    cfg = dict(cfg, grid_points=args.grid)
    h = config_hash(cfg)
    grid = default_grid(m, args.grid)
    if "grid" in cfg:
        g = cfg["grid"]
        grid = GridSpec(float(g["z_min"]), float(g["z_max"]), int(g.get("n", args.grid)))
    with open(out / "policy.csv", "w", encoding="utf-8", newline="") as fh:
        write_policy_csv(policy_table(m, grid), fh, h)
    write_json(out / "manifest.json", manifest(cfg, p, m, ["policy.csv"]))
    s = solution_summary(m)
    print(f"regime={s['regime']} z_bar={fmt(s['z_bar']) or 'none'} w_bar={fmt(s['w_bar']) or 'none'}")
    return EXIT_OK


def parse_range(text: str) -> tuple[str, list[float]]:
    """``name=start:stop:step`` to the inclusive list of grid values."""
    try:
        name, spec = text.split("=", 1)
        start, stop, step = (float(x) for x in spec.split(":"))
    except ValueError as exc:
        raise ParameterError("BadSweepSpec", "sweep", f"expected name=start:stop:step, got {text!r}") from exc
    name = name.strip()
    if name not in SWEEPABLE:
        raise ParameterError("BadSweepSpec", "sweep", f"cannot sweep '{name}'")
    if not step > 0 or stop < start:
        raise ParameterError("EmptySweep", "sweep", f"range {spec!r} contains no points")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return name, [float(format(start + i * step, ".12g")) for i in range(count)]


def _sweep_specs(args: argparse.Namespace, cfg: dict[str, Any]) -> list[tuple[str, list[float]]]:
    texts = list(args.param or [])
    if not texts and "sweep" in cfg:
        texts = [f"{k}={v[0]}:{v[1]}:{v[2]}" for k, v in cfg["sweep"].items()]
    if not texts:
        raise ParameterError("EmptySweep", "sweep", "no sweep parameter given")
    if len(texts) > 2:
        raise ParameterError("BadSweepSpec", "sweep", "at most two parameters can be swept")
    return [parse_range(t) for t in texts]


def _sweep_point(base: ModelParams, changes: dict[str, float]) -> dict[str, Any]:
    try:
        m = solve(base.with_updates(**changes))
    except SolverError as exc:
        return {"regime": "", "j": None, "z_bar": None, "w_bar": None,
                "error": getattr(exc, "code", type(exc).__name__)}
    b = m.boundary
    return {"regime": b.regime.value, "j": b.j, "z_bar": b.z_bar, "w_bar": b.w_bar, "error": ""}


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    specs = _sweep_specs(args, cfg)
    base = params_from_config(cfg)
    cfg = dict(cfg, sweep_spec=list(args.param or []))
    names = [n for n, _ in specs]
    points: list[dict[str, float]] = [{}]
    for name, values in specs:
        points = [dict(pt, **{name: v}) for pt in points for v in values]
    with ThreadPoolExecutor(max_workers=solver_threads()) as pool:
        results = list(pool.map(lambda pt: _sweep_point(base, pt), points))
    out = _out_dir(args)
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_sha256={config_hash(cfg)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*names, "regime", "j", "z_bar", "w_bar", "error"])
        for pt, res in zip(points, results):
            writer.writerow([*(fmt(pt[n]) for n in names), res["regime"], fmt(res["j"]),
                             fmt(res["z_bar"]), fmt(res["w_bar"]), res["error"]])
    print(f"{len(points)} sweep points written to {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    p = params_from_config(cfg)
    if "simulation" not in cfg:
        raise ParameterError("MissingField", "simulation", "config has no 'simulation' section")
    sim = SimConfig.from_mapping(cfg["simulation"])
    m = solve(p)
    out = _out_dir(args)
    h = config_hash(cfg)
    records = simulate_paths(sim, m)
    with open(out / "paths.csv", "w", encoding="utf-8", newline="") as fh:
        write_paths_csv(records, fh, sim.output_stride, h)
    check = budget_check(sim, m, Phase.PRE)
    summary = {
        **check.summary(),
        "label": check.label,
        "n_paths": sim.n_paths,
        "retired_fraction": sum(r.tau_hit is not None for r in records) / len(records),
        "config_sha256": h,
    }
    write_json(out / "summary.json", summary)
    print(f"simulated {sim.n_paths} paths; budget check pass={summary['pass']}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    p = params_from_config(cfg)
    settings = VerifySettings.from_mapping(cfg.get("verify"))
    # test hook: scales the pasting coefficient A to prove the checks can fail
    a_scale = float(cfg.get("fault_injection", {}).get("a_scale", 1.0))
    checks = run_checks(p, settings, a_scale=a_scale)
    rep = report(checks)
    out = _out_dir(args)
    m = solve(p, a_scale=a_scale)
    payload = {
        "config_sha256": config_hash(cfg),
        "params": resolved_params(p, m),
        **solution_summary(m),
        **rep,
    }
    write_json(out / "verification.json", payload)
    for c in checks:
        measured = "" if c.measured is None else f" measured={c.measured:.3g}"
        print(f"{c.status.upper():7s} {c.name}{measured}")
    return EXIT_OK if rep["passed"] else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retire-dual",
        description="Optimal voluntary retirement under income disaster and income support.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="JSON parameter file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--tie-delta-to-k", action="store_true", help="set delta equal to the Merton constant K")

    p_solve = sub.add_parser("solve", help="solve for the retirement threshold and policy table")
    common(p_solve)
    p_solve.add_argument("--grid", type=int, default=50, help="number of dual grid points in the policy table")
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="solve over a grid of one or two parameters")
    common(p_sweep)
    p_sweep.add_argument("--param", action="append", metavar="NAME=START:STOP:STEP",
                         help="parameter range (repeat for a two-parameter sweep)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_sim = sub.add_parser("simulate", help="Monte Carlo life-cycle paths and budget check")
    common(p_sim)
    p_sim.add_argument("--seed", type=int, default=None, help="override the master seed (u64)")
    p_sim.set_defaults(func=cmd_simulate)

    p_ver = sub.add_parser("verify", help="run every consistency check and write a report")
    common(p_ver)
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, SolverError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TypeError, KeyError, ValueError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
