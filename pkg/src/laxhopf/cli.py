"""Batch front end: JSON scenario configs, pipeline execution, tabular export.

Subcommands: run, sweep, verify, conjugate, moderate.  Configs are JSON with a
versioned "schema" field; every named cost/terminal/rate resolves in the
catalogs; a fixed seed makes runs byte-identical.  Exit codes: 0 success, 2
invalid config (diagnostic carries the offending field path), 3 value is
+infinity everywhere.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields as dc_fields
from pathlib import Path

import numpy as np

from .costs import build_conjugate_table, make_cost, make_terminal
from .discounted import actualized_enrichment_certificate, discounted_value, make_rate
from .economy import ImpetusCostSpec, economic_value, pack_economy
from .errors import ConfigError, LaxHopfError, MisuseError
from .laxhopf_core import (
    OuterGrid,
    classic_lax_hopf,
    generalized_lax_hopf,
    value_result_to_json,
    wtp_value,
)
from .moderation import SolverConfig, build_moderation_table, moderation_table_to_csv
from .trajectories import trajectory_to_csv
from .verify import DPGrids, Scenario, convergence_study, dp_oracle, surface_to_csv

_KINDS = ("classic", "generalized", "discounted", "economy", "wtp", "verify")


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _get(cfg: dict, path: str, default=KeyError, kind=None):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is KeyError:
                _fail(path, "missing required field")
            return default
        node = node[part]
    if kind is not None and not isinstance(node, kind):
        _fail(path, f"expected {getattr(kind, '__name__', kind)}, got {type(node).__name__}")
    return node


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        _fail("config", "top level must be an object")
    if _get(cfg, "schema", 1) != 1:
        _fail("schema", f"unsupported schema version {cfg['schema']!r}")
    kind = _get(cfg, "kind", kind=str)
    if kind not in _KINDS:
        _fail("kind", f"must be one of {_KINDS}, got {kind!r}")
    return cfg


def _solver_cfg(cfg: dict) -> SolverConfig:
    raw = dict(_get(cfg, "solver", {}, dict))
    raw.setdefault("seed", int(_get(cfg, "seed", 0)))
    known = {f.name for f in dc_fields(SolverConfig)}
    for key in raw:
        if key not in known:
            _fail(f"solver.{key}", "unknown solver option")
    return SolverConfig(**raw)


def _named(cfg, path, factory):
    spec = _get(cfg, path, kind=dict)
    name = _get(cfg, f"{path}.name", kind=str)
    params = _get(cfg, f"{path}.params", {}, dict)
    try:
        return factory(name, **params)
    except MisuseError as exc:
        _fail(f"{path}.name", str(exc))


def _outer_grid(cfg: dict) -> OuterGrid:
    o = _get(cfg, "outer", kind=dict)
    try:
        return OuterGrid.build(
            omega_max=float(_get(cfg, "outer.omega_max")),
            n_omega=int(_get(cfg, "outer.n_omega", 10)),
            upsilon_box=_get(cfg, "outer.upsilon_box", kind=list),
            n_upsilon=int(_get(cfg, "outer.n_upsilon", 21)),
            refine=bool(_get(cfg, "outer.refine", True)),
            shrink=float(_get(cfg, "outer.shrink", 0.5)),
            max_rounds=int(_get(cfg, "outer.max_rounds", 10)),
        )
    except MisuseError as exc:
        _fail("outer", str(exc))


def _dp_grids(cfg: dict, path="dp") -> DPGrids:
    d = _get(cfg, path, kind=dict)
    try:
        return DPGrids.build(
            t0=float(d.get("t0", 0.0)), T=float(_get(cfg, "T")),
            n_t=int(d["n_t"]), state_box=d["state_box"],
            state_step=float(d["state_step"]), velocity_box=d["velocity_box"],
            velocity_step=float(d["velocity_step"]),
        )
    except KeyError as exc:
        _fail(f"{path}.{exc.args[0]}", "missing required field")
    except (MisuseError, ConfigError) as exc:
        _fail(path, str(exc))


_IMPETUS_SCALARS = {
    "quadratic": lambda a=1.0: (lambda e: a * e * e),
    "abs": lambda: abs,
}


def _economy_spec(cfg: dict) -> ImpetusCostSpec:
    e = _get(cfg, "economy", kind=dict)
    name = _get(cfg, "economy.scalar_cost", kind=str)
    if name not in _IMPETUS_SCALARS:
        _fail("economy.scalar_cost", f"unknown impetus cost {name!r}")
    params = _get(cfg, "economy.scalar_params", {}, dict)
    return ImpetusCostSpec(
        scalar_cost=_IMPETUS_SCALARS[name](**params),
        gamma_price=float(_get(cfg, "economy.gamma_price")),
        gamma_agents=tuple(float(g) for g in _get(cfg, "economy.gamma_agents", kind=list)),
        shared_prices=bool(_get(cfg, "economy.shared_prices", False)),
    )


def run_config(cfg: dict, out_dir: Path) -> int:
    """Execute one scenario; writes result.json plus trajectory CSV, prints a summary."""
    kind = cfg["kind"]
    out_dir.mkdir(parents=True, exist_ok=True)
    solver = _solver_cfg(cfg)
    T = float(_get(cfg, "T"))

    if kind == "wtp":
        terminal = _named(cfg, "terminal", make_terminal)
        w = _get(cfg, "wtp", kind=dict)
        box = np.asarray(_get(cfg, "wtp.state_box", kind=list), float).reshape(-1, 2)
        n = int(_get(cfg, "wtp.n_state", 101))
        axes = [np.linspace(lo, hi, n) for lo, hi in box]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid_pts = np.stack([m.ravel() for m in mesh], axis=1)
        value = wtp_value(
            terminal, float(_get(cfg, "wtp.velocity_bound")), T,
            _get(cfg, "x", kind=list), float(_get(cfg, "wtp.omega")), grid_pts,
        )
        doc = {"value": "inf" if not value.is_finite else value.value}
        (out_dir / "result.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
        if not value.is_finite:
            print("V=inf")
            return 3
        print(f"V={value.value:.6g}")
        return 0

    if kind == "verify":
        terminal = _named(cfg, "terminal", make_terminal)
        cost = _named(cfg, "cost", make_cost)
        levels_raw = _get(cfg, "verify.levels", kind=list)
        levels = [_dp_grids({"T": T, "dp": lv}, "dp") for lv in levels_raw]
        scenario = Scenario(
            terminal=terminal, cost=cost, T=T,
            x=np.atleast_1d(np.asarray(_get(cfg, "x", kind=list), float)),
            outer_grid=_outer_grid(cfg), solver_cfg=solver,
        )
        rows = convergence_study(scenario, levels)
        with open(out_dir / "error_table.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dt", "oracle_value", "formula_value", "error"])
            for r in rows:
                writer.writerow([repr(r.dt), repr(r.oracle_value),
                                 repr(r.formula_value), repr(r.error)])
        surface = dp_oracle(terminal, cost, levels[-1])
        surface_to_csv(surface, out_dir / "value_surface.csv")
        for r in rows:
            print(f"dt={r.dt:.6g} error={r.error:.6g}")
        return 0

    if kind == "economy":
        terminal = _named(cfg, "terminal", make_terminal)
        spec = _economy_spec(cfg)
        allocations = np.asarray(_get(cfg, "economy.allocations", kind=list), float)
        prices = np.asarray(_get(cfg, "economy.prices", kind=list), float)
        result = economic_value(terminal, spec, T, allocations, prices,
                                _outer_grid(cfg), solver)
    else:
        terminal = _named(cfg, "terminal", make_terminal)
        cost = _named(cfg, "cost", make_cost)
        x = _get(cfg, "x", kind=list)
        grid = _outer_grid(cfg)
        if kind == "classic":
            result = classic_lax_hopf(terminal, cost, T, x, grid,
                                      n_steps=solver.n_steps)
        elif kind == "generalized":
            result = generalized_lax_hopf(terminal, cost, T, x, grid, solver)
        else:  # discounted
            rate = _named(cfg, "rate", make_rate)
            result = discounted_value(terminal, cost, rate, T, x, grid, solver)

    (out_dir / "result.json").write_text(value_result_to_json(result))
    if result.trajectory is not None:
        trajectory_to_csv(result.trajectory, out_dir / "trajectory.csv")
    table_spec = _get(cfg, "outputs.moderation_table", None)
    if table_spec is not None and kind in ("generalized", "discounted"):
        cost = _named(cfg, "cost", make_cost)
        table = build_moderation_table(
            cost, T, _get(cfg, "x", kind=list),
            table_spec["omega_grid"], table_spec["upsilon_grid"], solver,
        )
        moderation_table_to_csv(table, out_dir / "moderation_table.csv")
    if not result.value.is_finite:
        print("V=inf")
        return 3
    ups = "-" if result.upsilon_star is None else \
        ",".join(f"{v:.6g}" for v in result.upsilon_star)
    cert = "-" if result.certificate_residual is None else \
        f"{result.certificate_residual:.3g}"
    print(f"V={result.value.value:.6g} omega={result.omega_star:.6g} "
          f"upsilon={ups} cert={cert}")
    return 0


def _set_path(cfg: dict, axis: str, value: float):
    parts = axis.split(".")
    node = cfg
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict):
            if part not in node:
                _fail(axis, "path does not resolve in the config")
            node = node[part]
        else:
            _fail(axis, "path does not resolve in the config")
    leaf = parts[-1]
    if isinstance(node, list):
        i = int(leaf)
        if not isinstance(node[i], (int, float)):
            _fail(axis, "axis must address a numeric field")
        node[i] = value
    elif isinstance(node, dict) and isinstance(node.get(leaf), (int, float)):
        node[leaf] = value
    else:
        _fail(axis, "axis must address a numeric field")


def sweep_config(cfg: dict, axis: str, values, out_dir: Path, threads: int = 1) -> int:
    """One run per swept value; failed rows keep their exit code, the sweep continues."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if values:
        # validate the axis against the base config before any row runs
        _set_path(json.loads(json.dumps(cfg)), axis, float(values[0]))
    rows = []

    def one(i_value):
        i, value = i_value
        sub = json.loads(json.dumps(cfg))
        _set_path(sub, axis, value)
        row_dir = out_dir / f"row_{i:03d}"
        try:
            code = run_config(sub, row_dir)
        except LaxHopfError as exc:
            return (value, None, None, 2 if isinstance(exc, ConfigError) else 1)
        doc = json.loads((row_dir / "result.json").read_text())
        v = doc.get("value")
        return (value, None if v == "inf" else v, doc.get("omega_star"), code)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, enumerate(values)))
    else:
        rows = [one(iv) for iv in enumerate(values)]
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([axis, "value", "omega_star", "exit_code"])
        for value, v, om, code in rows:
            writer.writerow([repr(float(value)),
                             "inf" if v is None else repr(float(v)),
                             "" if om is None else repr(float(om)),
                             code])
    return 0


def conjugate_config(cfg: dict, out_dir: Path) -> int:
    """Dump a ConjugateTable CSV for the configured cost."""
    out_dir.mkdir(parents=True, exist_ok=True)
    cost = _named(cfg, "cost", make_cost)
    c = _get(cfg, "conjugate", kind=dict)
    t = float(c.get("t", 0.0))
    x = np.atleast_1d(np.asarray(c.get("x", [0.0]), float))
    dual = np.asarray(_get(cfg, "conjugate.dual_grid", kind=list), float)
    vbox = np.asarray(_get(cfg, "conjugate.velocity_box", kind=list), float).reshape(-1, 2)
    n = int(c.get("n_velocity", 2001))
    axes = [np.linspace(lo, hi, n) for lo, hi in vbox]
    mesh = np.meshgrid(*axes, indexing="ij")
    vgrid = np.stack([m.ravel() for m in mesh], axis=1)
    table = build_conjugate_table(cost, t, x, dual, vgrid)
    duals = dual if dual.ndim > 1 else dual[:, None]
    with open(out_dir / "conjugate.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"p_{h + 1}" for h in range(duals.shape[1])] + ["conjugate"])
        for p, v in zip(duals, table.values):
            writer.writerow([repr(float(c_)) for c_ in p] + [repr(float(v))])
    return 0


def moderate_config(cfg: dict, out_dir: Path) -> int:
    """Dump a ModerationTable CSV for the configured cost."""
    out_dir.mkdir(parents=True, exist_ok=True)
    cost = _named(cfg, "cost", make_cost)
    m = _get(cfg, "moderation", kind=dict)
    table = build_moderation_table(
        cost, float(_get(cfg, "T")), _get(cfg, "x", kind=list),
        _get(cfg, "moderation.omega_grid", kind=list),
        _get(cfg, "moderation.upsilon_grid", kind=list),
        _solver_cfg(cfg),
    )
    moderation_table_to_csv(table, out_dir / "moderation_table.csv")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="laxhopf", description=__doc__)
    parser.add_argument("command", choices=["run", "sweep", "verify", "conjugate", "moderate"])
    parser.add_argument("--config", required=True, help="scenario JSON path")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="parallel rows for sweep (fallback: LAXHOPF_THREADS)")
    parser.add_argument("--axis", default=None, help="sweep: dotted path of the swept field")
    parser.add_argument("--values", default=None, help="sweep: comma-separated numbers")
    args = parser.parse_args(argv)

    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("LAXHOPF_THREADS", "1"))
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        out_dir = Path(args.out if args.out is not None else _get(cfg, "out_dir", "."))
        if args.command == "run":
            return run_config(cfg, out_dir)
        if args.command == "verify":
            if cfg["kind"] != "verify":
                _fail("kind", "the verify command needs a verify-kind config")
            return run_config(cfg, out_dir)
        if args.command == "sweep":
            if args.axis is None or args.values is None:
                _fail("sweep", "--axis and --values are required")
            values = [float(v) for v in args.values.split(",") if v.strip() != ""]
            return sweep_config(cfg, args.axis, values, out_dir, threads=threads)
        if args.command == "conjugate":
            return conjugate_config(cfg, out_dir)
        return moderate_config(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LaxHopfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
