"""Batch command-line front end.

Subcommands cover every estimator plus the simulation study:

    dualreg fit      --config cfg.yaml [--out DIR]
    dualreg gdr      --config cfg.yaml
    dualreg iv       --config cfg.yaml
    dualreg qr       --config cfg.yaml
    dualreg simulate [--config cfg.yaml] [--seed N --threads N --out DIR]

Configuration lives in one YAML file (keys documented in the README) with
command-line overrides for the seed, output directory, thread count, and
quantile grid. Outputs are UTF-8 CSV/JSON files; exit status is 0 on
success, 1 for configuration problems, 2 for data problems, and 3 for
numerical failures, with a machine-readable error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .basis import BUILTIN_BASES, get_basis
from .baseline import qr_coefficient_process, rearranged_quantiles
from .core import build_design, quantile_coefficients
from .exceptions import (
    ConfigError,
    DataError,
    DomainError,
    DualRegressionError,
    GridError,
    MaxIterationsError,
)
from .gdr import fit_gdr
from .io import dual_fit_document, read_dataset_csv, write_json, write_table
from .iv import covariance_iv, first_stage, fit_iv_direct, fit_iv_indirect
from .simulate import METHODS, DgpSpec, run_study
from .solver import SolverOptions, covariance, fit_dual

__all__ = ["RunConfig", "load_config", "run", "main"]

LEVEL_SET_US = tuple(np.round(np.arange(0.1, 0.91, 0.1), 10))
X_GRID_POINTS = 101
Y_GRID_POINTS = 512

_CONFIG_KEYS = {
    "input_csv",
    "outcome",
    "regressors",
    "instruments",
    "center",
    "basis",
    "iv_method",
    "tau_grid",
    "solver",
    "seed",
    "output_dir",
    "threads",
    "replications",
    "methods",
    "dgp",
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration for one command."""

    command: str
    input_csv: str | None = None
    outcome_column: str = "y"
    regressor_columns: tuple[str, ...] = ()
    instrument_columns: tuple[str, ...] = ()
    center: bool = False
    basis: str = "canonical-J2"
    iv_method: str = "direct"
    tau_grid: tuple[float, ...] = tuple(np.arange(1, 100) / 100.0)
    solver: SolverOptions = field(default_factory=SolverOptions)
    seed: int = 0
    output_dir: str = "out"
    threads: int = 1
    replications: int = 500
    methods: tuple[str, ...] = METHODS
    dgp: dict = field(default_factory=dict)
    n_grid: tuple[int, ...] = (100, 235, 500, 1000)


def parse_tau_grid(text: str) -> tuple[float, ...]:
    """Parse an ``a:b:step`` quantile grid specification."""
    try:
        a, b, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise ConfigError(f"tau grid must look like 'a:b:step', got {text!r}") from None
    if step <= 0 or not (0.0 < a <= b < 1.0):
        raise ConfigError(f"invalid tau grid bounds {text!r}")
    count = int(round((b - a) / step))
    grid = np.round(a + step * np.arange(count + 1), 12)
    grid = grid[(grid > 0.0) & (grid < 1.0)]
    if grid.size == 0:
        raise ConfigError(f"tau grid {text!r} is empty")
    return tuple(float(t) for t in grid)


def _solver_options(raw: dict) -> SolverOptions:
    allowed = {"tol_grad", "tol_constraint", "max_iter", "boundary_fraction", "init"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown solver options: {sorted(unknown)}")
    try:
        return SolverOptions(**raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid solver options: {err}") from err


def load_config(command: str, path: str | None, overrides: dict) -> RunConfig:
    """Read the YAML configuration and apply command-line overrides."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as handle:
                raw = yaml.safe_load(handle) or {}
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        except yaml.YAMLError as err:
            raise ConfigError(f"malformed config {path}: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping at the top level")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    dgp = dict(raw.get("dgp") or {})
    n_grid = tuple(int(n) for n in dgp.pop("n_grid", (100, 235, 500, 1000)))

    tau_raw = raw.get("tau_grid")
    if overrides.get("tau_grid") is not None:
        tau = parse_tau_grid(overrides["tau_grid"])
    elif isinstance(tau_raw, str):
        tau = parse_tau_grid(tau_raw)
    elif tau_raw is not None:
        tau = tuple(float(t) for t in tau_raw)
        if any(not 0.0 < t < 1.0 for t in tau):
            raise ConfigError("tau grid entries must lie strictly inside (0, 1)")
    else:
        tau = tuple(np.arange(1, 100) / 100.0)

    methods = tuple(raw.get("methods", METHODS))
    unknown_methods = set(methods) - set(METHODS)
    if unknown_methods:
        raise ConfigError(f"unknown simulation methods: {sorted(unknown_methods)}")

    basis = raw.get("basis", "canonical-J2")
    if basis not in BUILTIN_BASES:
        raise ConfigError(f"unknown basis '{basis}'; built-ins: {sorted(BUILTIN_BASES)}")

    iv_method = raw.get("iv_method", "direct")
    if iv_method not in ("direct", "indirect"):
        raise ConfigError(f"iv_method must be 'direct' or 'indirect', got {iv_method!r}")

    config = RunConfig(
        command=command,
        input_csv=raw.get("input_csv"),
        outcome_column=str(raw.get("outcome", "y")),
        regressor_columns=tuple(raw.get("regressors", ())),
        instrument_columns=tuple(raw.get("instruments", ())),
        center=bool(raw.get("center", False)),
        basis=basis,
        iv_method=iv_method,
        tau_grid=tau,
        solver=_solver_options(dict(raw.get("solver") or {})),
        seed=int(overrides.get("seed") if overrides.get("seed") is not None else raw.get("seed", 0)),
        output_dir=str(overrides.get("out") or raw.get("output_dir", "out")),
        threads=int(overrides.get("threads") if overrides.get("threads") is not None else raw.get("threads", 1)),
        replications=int(raw.get("replications", 500)),
        methods=methods,
        dgp=dgp,
        n_grid=n_grid,
    )
    if command in ("fit", "gdr", "iv", "qr"):
        if not config.input_csv:
            raise ConfigError(f"'{command}' needs input_csv in the config file")
    if command == "iv" and not config.instrument_columns:
        raise ConfigError("'iv' needs instrument columns in the config file")
    return config


def _load_dataset(config: RunConfig):
    return read_dataset_csv(
        config.input_csv,
        outcome=config.outcome_column,
        regressors=config.regressor_columns,
        instruments=config.instrument_columns or None,
    )


def _regressor_grids(dataset, design):
    """Per-regressor evaluation grids with the other columns held at their
    means; yields (name, grid, design_rows)."""
    x = dataset.x
    k = design.k
    if k == 1:
        yield "(intercept)", np.zeros(1), np.ones((1, 1))
        return
    means = x.mean(axis=0)
    for j in range(k - 1):
        grid = np.linspace(x[:, j].min(), x[:, j].max(), X_GRID_POINTS)
        rows = np.tile(np.concatenate([[1.0], means]), (grid.shape[0], 1))
        rows[:, 1 + j] = grid
        if design.centered:
            rows[:, 1:] -= design.column_means[1:]
        yield dataset.x_names[j], grid, rows


def _run_fit(config: RunConfig, out: Path) -> None:
    dataset = _load_dataset(config)
    design = build_design(dataset, center=config.center)
    y = dataset.y
    fit = fit_dual(y, design, config.solver)
    if not fit.converged:
        raise MaxIterationsError("dual fit did not converge; try raising max_iter")
    se = covariance(fit, y, design).se
    write_json(out / "fit.json", dual_fit_document(fit, se=se))

    taus = np.asarray(config.tau_grid)
    dr_coef = quantile_coefficients(fit, taus)
    qr_fit = qr_coefficient_process(y, design, taus)
    coef_header = ["tau", *[f"coef_{j}" for j in range(design.k)], "method"]
    coef_rows = [[t, *row, "dual"] for t, row in zip(taus, dr_coef)]
    coef_rows += [[t, *row, "qr"] for t, row in zip(qr_fit.taus, qr_fit.coefficients)]
    write_table(out / "coefficient_process.csv", coef_header, coef_rows)

    levels = np.asarray(LEVEL_SET_US)
    beta_levels = quantile_coefficients(fit, levels)
    level_rows = []
    line_rows = []
    y_grid = np.linspace(
        y.min() - 0.1 * (y.max() - y.min()),
        y.max() + 0.1 * (y.max() - y.min()),
        Y_GRID_POINTS,
    )
    qr_beta_levels = qr_fit.coefficients_at(levels)
    for name, grid, rows in _regressor_grids(dataset, design):
        y_dual = rows @ beta_levels.T
        y_qr = rows @ qr_beta_levels.T
        for i, xv in enumerate(grid):
            y_rqr = rearranged_quantiles(qr_fit, rows[i], levels, y_grid)
            for l, u in enumerate(levels):
                level_rows.append([name, xv, u, y_dual[i, l]])
                line_rows.append([name, xv, u, y_dual[i, l], y_qr[i, l], y_rqr[l]])
    write_table(out / "level_sets.csv", ["regressor", "x", "u", "y"], level_rows)
    write_table(
        out / "quantile_lines.csv",
        ["regressor", "x", "u", "y_dual", "y_qr", "y_rearranged_qr"],
        line_rows,
    )


def _run_qr(config: RunConfig, out: Path) -> None:
    dataset = _load_dataset(config)
    design = build_design(dataset, center=config.center)
    qr_fit = qr_coefficient_process(dataset.y, design, np.asarray(config.tau_grid))
    header = ["tau", *[f"coef_{j}" for j in range(design.k)], "method"]
    rows = [[t, *row, "qr"] for t, row in zip(qr_fit.taus, qr_fit.coefficients)]
    write_table(out / "coefficient_process.csv", header, rows)


def _run_gdr(config: RunConfig, out: Path) -> None:
    dataset = _load_dataset(config)
    basis = get_basis(config.basis)
    fit = fit_gdr(dataset.y, dataset, basis=basis, options=config.solver)
    if not fit.converged:
        raise MaxIterationsError("generalized fit did not converge")
    write_json(
        out / "gdr_fit.json",
        {
            "basis": basis.name,
            "gamma": [float(v) for v in fit.gamma],
            "slopes": [[float(v) for v in row] for row in fit.slopes],
            "column_means": [float(v) for v in fit.column_means],
            "e": [float(v) for v in fit.e],
            "u": [float(v) for v in fit.u],
            "converged": bool(fit.converged),
            "iterations": int(fit.iterations),
        },
    )


def _run_iv(config: RunConfig, out: Path) -> None:
    dataset = _load_dataset(config)
    basis = get_basis(config.basis)
    if config.iv_method == "direct":
        fit = fit_iv_direct(dataset.y, dataset, config.solver)
    else:
        fit = fit_iv_indirect(dataset.y, dataset, basis=basis, options=config.solver)
    if not fit.converged:
        raise MaxIterationsError("instrumental fit did not converge")
    se = None
    if fit.higher_order is None:
        se = [float(v) for v in covariance_iv(fit, dataset.y, dataset).se]
    stage = first_stage(dataset)
    write_json(
        out / "iv_fit.json",
        {
            "method": fit.method,
            "beta1": [float(v) for v in fit.beta1],
            "beta2": [float(v) for v in fit.beta2],
            "lambda1": None if fit.lambda1 is None else [float(v) for v in fit.lambda1],
            "lambda2": None if fit.lambda2 is None else [float(v) for v in fit.lambda2],
            "e": [float(v) for v in fit.e],
            "u": [float(v) for v in fit.u],
            "converged": bool(fit.converged),
            "iterations": int(fit.iterations),
            "se": se,
            "first_stage": [[float(v) for v in row] for row in stage.coefficients],
        },
    )


def _run_simulate(config: RunConfig, out: Path) -> None:
    allowed = {"lambda_o1", "lambda_o2", "x_mean", "x_sd", "truncation_point"}
    unknown = set(config.dgp) - allowed
    if unknown:
        raise ConfigError(f"unknown dgp keys: {sorted(unknown)}")
    overrides = dict(config.dgp)
    for key in ("lambda_o1", "lambda_o2"):
        if key in overrides:
            overrides[key] = tuple(float(v) for v in overrides[key])
    specs = [DgpSpec(n=n, seed=config.seed, **overrides) for n in config.n_grid]
    report = run_study(
        specs,
        replications=config.replications,
        methods=config.methods,
        parallelism=config.threads,
        tau_grid=np.asarray(config.tau_grid),
    )
    kwargs = {"index": False, "float_format": "%.17g"}
    report.table1.to_csv(out / "table1.csv", **kwargs)
    report.table2.to_csv(out / "table2.csv", **kwargs)
    report.table3.to_csv(out / "table3.csv", **kwargs)
    report.per_rep.to_csv(out / "per_rep.csv", **kwargs)
    report.bands.to_csv(out / "coefficient_bands.csv", **kwargs)
    write_json(out / "run_config.json", report.config)
    if report.n_failed:
        write_json(out / "failures.json", {"failures": list(report.failures)})


def run(config: RunConfig) -> None:
    """Execute one command, writing its artifacts to the output directory."""
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ConfigError(f"cannot create output directory {out}: {err}") from err
    runner = {
        "fit": _run_fit,
        "qr": _run_qr,
        "gdr": _run_gdr,
        "iv": _run_iv,
        "simulate": _run_simulate,
    }[config.command]
    runner(config, out)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualreg",
        description="Conditional distribution estimation by dual regression.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("fit", "location-scale fit with quantile lines and level sets"),
        ("gdr", "generalized fit with a configurable basis"),
        ("iv", "structural fit under instrument orthogonality"),
        ("qr", "quantile-regression coefficient process"),
        ("simulate", "Monte Carlo study with table-shaped summaries"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", default=None, help="YAML configuration file")
        cmd.add_argument("--seed", type=int, default=None, help="override the master seed")
        cmd.add_argument("--out", default=None, help="override the output directory")
        cmd.add_argument("--threads", type=int, default=None, help="worker processes")
        cmd.add_argument("--tau-grid", default=None, metavar="A:B:STEP",
                         help="override the quantile grid, e.g. 0.01:0.99:0.01")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "threads": args.threads,
        "tau_grid": args.tau_grid,
    }
    try:
        config = load_config(args.command, args.config, overrides)
        run(config)
    except DualRegressionError as err:
        if isinstance(err, (ConfigError, DomainError, GridError)):
            code = 1
        elif isinstance(err, DataError):
            code = 2
        else:
            code = 3
        json.dump(
            {"error": type(err).__name__, "message": str(err), "exit_code": code},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
