"""Command-line front end.

Three subcommands, all driven by a JSON config file plus overriding
flags:

* ``simulate``  -- write sample paths, one CSV per scheme, all schemes
  driven by the same Wiener path;
* ``converge``  -- run a convergence study and write per-level error
  CSVs plus a fitted-rate summary;
* ``integrals`` -- run one of the mixed-integral experiments and write
  its table.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence
beyond the configured threshold.  All CSVs carry a header row and print
floats with 17 significant digits, and identical (config, seed) runs
produce byte-identical files for any worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import experiments
from .convergence import StudyConfig, fit_rate, level_errors, write_levels_csv, \
    write_summary_csv
from .errors import ConfigurationError, DegenerateDataError, DivergenceError
from .iterint import method_from_spec
from .models import (
    heston_euler,
    heston_milstein_1d,
    heston_milstein_2d,
    make_black_scholes,
)
from .schemes import euler_scalar, milstein_scalar
from .studyspec import (
    CLI_METRICS,
    build_functional,
    build_model_params,
    build_runner,
    build_study,
    parallel_sweep,
    scheme_label,
)
from .wiener import SeedPath, TimeGrid, generate_segment
from .models import BlackScholesParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"config parse error in {path} at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}"
        ) from None


def _out_path(out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _file_label(label: str) -> str:
    return label.replace("(", "_").replace(")", "")


def _write_rows(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([x if isinstance(x, (str, int)) else _fmt(x) for x in row])


def _simulate_paths(cfg: dict, seed: int):
    """One shared segment, one PathResult per configured scheme."""
    params = build_model_params(cfg.get("model", {}))
    grid_cfg = cfg.get("grid", {})
    grid = TimeGrid(grid_cfg.get("t0", 0.0), grid_cfg.get("horizon", 1.0),
                    int(grid_cfg.get("steps", 32)))
    is_bs = isinstance(params, BlackScholesParams)
    m = 1 if is_bs else 2
    seg = generate_segment(SeedPath(seed, replicate=0), m, grid)
    outputs = []
    for scheme_cfg in cfg.get("schemes", []):
        label = scheme_label(scheme_cfg)
        name = scheme_cfg.get("name")
        if is_bs:
            sde = make_black_scholes(params)
            if name == "euler":
                path = euler_scalar(sde, params.x0, seg)
            elif name == "milstein":
                path = milstein_scalar(sde, params.x0, seg)
            else:
                raise ConfigurationError(f"black_scholes cannot simulate {name!r}")
        else:
            if name == "euler":
                path = heston_euler(params, seg)
            elif name == "milstein_1d":
                path = heston_milstein_1d(params, seg)
            elif name == "milstein_2d":
                method_cfg = scheme_cfg.get("method")
                if method_cfg is None:
                    raise ConfigurationError("milstein_2d needs a method entry")
                resolution = scheme_cfg.get("n_k", scheme_cfg.get("p"))
                if resolution is None:
                    raise ConfigurationError("milstein_2d needs n_k (or p) to simulate")
                method = method_from_spec(method_cfg, int(resolution))
                path = heston_milstein_2d(params, seg, method)
            else:
                raise ConfigurationError(f"heston cannot simulate {name!r}")
        outputs.append((label, path))
    exact = None
    if is_bs and cfg.get("include_exact", True):
        sde = make_black_scholes(params)
        exact = sde.exact_solution(grid.times() - grid.t0, seg.cumulative[0], params.x0)
    return grid, outputs, exact


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    grid, outputs, exact = _simulate_paths(cfg, seed)
    times = grid.times()
    for label, path in outputs:
        states = path.states if path.states.ndim == 2 else path.states[:, None]
        header = ["t"] + [f"state_{i + 1}" for i in range(states.shape[1])]
        rows = [[t] + list(row) for t, row in zip(times, states)]
        _write_rows(_out_path(args.out, f"{_file_label(label)}.csv"), header, rows)
    if exact is not None:
        _write_rows(_out_path(args.out, "exact.csv"), ["t", "state_1"],
                    [[t, x] for t, x in zip(times, exact)])
    return EXIT_OK


def cmd_converge(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    workers = args.workers if args.workers is not None else int(cfg.get("workers", 1))
    mode = args.mode or cfg.get("mode", "coupled")
    study = build_study(cfg.get("study", {}))
    metric = CLI_METRICS[args.metric] if args.metric else study.metric
    functional = build_functional(cfg.get("functional"), cfg.get("model", {}), study)
    max_div = float(cfg.get("max_divergent_fraction", 0.1))

    summary_rows = []
    degenerate = []
    diverged = []
    for scheme_cfg in cfg.get("schemes", []):
        label = scheme_label(scheme_cfg)
        build_runner(cfg.get("model", {}), scheme_cfg)  # fail fast on bad spec
        sweep = parallel_sweep(cfg.get("model", {}), scheme_cfg, study, seed, workers)
        pairs = level_errors(sweep, mode, metric, functional)
        write_levels_csv(pairs, open(_out_path(args.out,
                                               f"{_file_label(label)}_levels.csv"),
                                     "w", newline=""))
        if sweep.divergent > max_div * study.replicates:
            diverged.append((label, sweep.divergent))
        try:
            summary_rows.append((label, fit_rate(pairs, divergent=sweep.divergent)))
        except DegenerateDataError as exc:
            degenerate.append((label, str(exc)))
    if summary_rows:
        write_summary_csv(summary_rows,
                          open(_out_path(args.out, "summary.csv"), "w", newline=""))
    for label, message in degenerate:
        print(f"converge: {label}: degenerate data: {message}", file=sys.stderr)
    for label, count in diverged:
        print(f"converge: {label}: {count} divergent replicates", file=sys.stderr)
    if degenerate:
        return EXIT_CONFIG
    if diverged:
        return EXIT_DIVERGED
    return EXIT_OK


_EXPERIMENT_TABLES = {
    "figure5": ("figure5.csv",
                ["method", "interval", "n_k", "mean_abs_pairing_error"]),
    "figure6": ("figure6.csv", ["method", "k", "n_k", "delta", "mean_abs_error"]),
    "mse_law": ("mse_law.csv", ["method", "n_k", "delta", "mse", "normalized"]),
    "levy_rate": ("levy_rate.csv", ["p", "mse"]),
}


def cmd_integrals(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    workers = args.workers if args.workers is not None else int(cfg.get("workers", 1))
    experiment = cfg.get("experiment")
    if experiment not in _EXPERIMENT_TABLES:
        raise ConfigurationError(
            f"unknown experiment {experiment!r}; use one of {sorted(_EXPERIMENT_TABLES)}"
        )
    if experiment == "figure5":
        rows = experiments.figure5_rows(
            seed,
            dt=float(cfg.get("dt", 0.0625)),
            n_paths=int(cfg.get("n_paths", 5000)),
            n_intervals=int(cfg.get("n_intervals", 5)),
            nk_exponents=range(1, int(cfg.get("max_nk_exponent", 9)) + 1),
            workers=workers,
        )
    elif experiment == "figure6":
        rows = experiments.figure6_rows(
            seed,
            n_dt=int(cfg.get("n_dt", 32)),
            k_exponents=range(1, int(cfg.get("max_k_exponent", 5)) + 1),
            n_paths=int(cfg.get("n_paths", 4000)),
            oracle_factor=int(cfg.get("oracle_factor", 256)),
            workers=workers,
        )
    elif experiment == "mse_law":
        rows = experiments.mse_law_rows(
            seed,
            dt=float(cfg.get("dt", 1.0 / 16.0)),
            nk_list=[int(x) for x in cfg.get("nk_list", [4, 8, 16, 32, 64])],
            n_samples=int(cfg.get("n_samples", 10000)),
            oracle_factor=int(cfg.get("oracle_factor", 256)),
            workers=workers,
        )
    else:
        rows = experiments.levy_rate_rows(
            seed,
            dt=float(cfg.get("dt", 1.0 / 16.0)),
            p_list=[int(x) for x in cfg.get("p_list", [4, 8, 16, 32, 64])],
            n_samples=int(cfg.get("n_samples", 10000)),
            n_fine=int(cfg.get("n_fine", 8192)),
            workers=workers,
        )
    name, header = _EXPERIMENT_TABLES[experiment]
    _write_rows(_out_path(args.out, name), header, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strongsde",
        description="Strong SDE simulation, mixed-integral experiments, and "
                    "convergence-order estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, extras in (
        ("simulate", cmd_simulate, ()),
        ("converge", cmd_converge, ("workers", "mode", "metric")),
        ("integrals", cmd_integrals, ("workers",)),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=".", help="output directory")
        if "workers" in extras:
            p.add_argument("--workers", type=int, default=None,
                           help="worker process count")
        if "mode" in extras:
            p.add_argument("--mode", choices=("truth", "coupled"), default=None)
        if "metric" in extras:
            p.add_argument("--metric", choices=tuple(CLI_METRICS), default=None)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"strongsde: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateDataError as exc:
        print(f"strongsde: degenerate data: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"strongsde: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
