"""Command-line entry point: simulate, fit, evaluate, bench.

Exit codes: 0 success, 2 bad input or configuration, 3 numerical failure.
Options may also come from a JSON config file (``--config``), e.g.

    {"version": 1, "fit": {"iters": 20000, "burnin": 5000, "resolution": 100}}

Flags given on the command line override file values.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import geo_ingest as gi
from .assessment import MetricsReport, lpml, mae, rand_index
from .gibbs import load_draws, make_rng, run_chain, save_draws
from .mfm_model import MfmConfig, NumericalError, TruncatedPoisson
from .sim_bench import SCENARIOS, FitSettings, ScenarioSpec, default_workers, generate_counts, make_layout, run_replicates
from .summary import DEFAULT_DAHL_CAP, FitSummary, summarize

log = logging.getLogger("mfm_nhpp")

CONFIG_VERSION = 1

DEFAULTS = {
    "simulate": {"scenario": None, "layout": None, "layout_file": None, "lambdas": None,
                 "resolution": 20, "seed": 0, "points": False},
    "fit": {"resolution": None, "frame": "global", "min_magnitude": None, "iters": 5000,
            "burnin": 2000, "seed": 0, "k_init": 5, "gamma": 1.0, "a": 1.0, "b": 1.0,
            "k_prior_mean": 1.0, "scan": "systematic", "thin": 1, "dahl_cap": DEFAULT_DAHL_CAP,
            "dahl_thin": None, "compress": False},
    "evaluate": {"truth": None, "cpo": None},
    "bench": {"scenario": 1, "layout": None, "lambdas": None, "resolution": 20, "replicates": 100,
              "workers": None, "seed": 0, "iters": 5000, "burnin": 2000},
}


class UsageError(Exception):
    """Invalid input; maps to exit code 2."""


# ----------------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------------


def _options(args, command: str) -> dict:
    opts = dict(DEFAULTS[command])
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if cfg.get("version") != CONFIG_VERSION:
            raise UsageError(f"config {args.config}: expected \"version\": {CONFIG_VERSION}")
        section = cfg.get(command, {})
        unknown = set(section) - set(opts)
        if unknown:
            raise UsageError(f"config {args.config}: unknown {command} keys {sorted(unknown)}")
        opts.update(section)
    for key in opts:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    return opts


def _out_dir(path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"output directory does not exist: {p}")
    return p


def _parse_lambdas(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    try:
        return tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise UsageError(f"bad --lambdas value {text!r}") from None


def _scenario_spec(opts) -> ScenarioSpec:
    r = int(opts["resolution"])
    if opts.get("layout_file"):
        lr, lab = gi.read_grid_csv(opts["layout_file"], dtype=int)
        if lr != r:
            raise UsageError(f"layout file has resolution {lr}, expected {r}")
        layout = lab.reshape(r, r)
        lambdas = opts.get("lambdas")
    elif opts.get("layout"):
        layout = make_layout(opts["layout"], r)
        lambdas = opts.get("lambdas")
    elif opts.get("scenario") is not None:
        sc = SCENARIOS.get(int(opts["scenario"]))
        if sc is None:
            raise UsageError(f"unknown scenario {opts['scenario']!r}; choose from {sorted(SCENARIOS)}")
        layout = make_layout(sc["layout"], r)
        lambdas = opts.get("lambdas") or sc["lambdas"]
    else:
        raise UsageError("give --scenario, --layout or --layout-file")
    if lambdas is None:
        raise UsageError("--lambdas is required with a custom layout")
    return ScenarioSpec(r, _parse_lambdas(lambdas), layout, int(opts["seed"]))


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    opts = _options(args, "simulate")
    out = _out_dir(args.out)
    spec = _scenario_spec(opts)
    rng = make_rng(spec.seed)
    grid, truth, points = generate_counts(spec, rng, with_points=True)
    gi.write_grid_csv(out / "counts.csv", grid.resolution, grid.counts)
    gi.write_grid_csv(out / "truth.csv", grid.resolution, truth)
    if opts["points"]:
        gi.write_points_csv(out / "points.csv", points)
    _write_json(out / "scenario.json", {
        "resolution": spec.resolution, "true_lambdas": list(spec.true_lambdas),
        "seed": spec.seed, "total_points": grid.total,
    })
    log.info("wrote %d-cell grid with %d points to %s", grid.n, grid.total, out)
    return 0


def _load_input(opts, path):
    """Return (grid, points or None)."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"input file not found: {path}")
    if gi.is_grid_csv(path):
        grid = gi.read_grid_counts(path)
        if opts["resolution"] is not None and int(opts["resolution"]) != grid.resolution:
            raise UsageError(f"{path} has resolution {grid.resolution}, --resolution says {opts['resolution']}")
        return grid, None
    if opts["resolution"] is None:
        raise UsageError("--resolution is required for raw event CSV input")
    events, skipped = gi.parse_usgs_csv(path)
    if skipped:
        log.warning("skipped %d unparseable or out-of-range rows", len(skipped))
    if opts["min_magnitude"] is not None:
        events = gi.filter_magnitude(events, float(opts["min_magnitude"]))
    pattern = gi.to_unit_square(events, frame=opts["frame"])
    grid = gi.bin_counts(pattern, int(opts["resolution"]))
    log.info("binned %d events into a %dx%d grid", pattern.count, grid.resolution, grid.resolution)
    return grid, pattern


def _metrics(summary: FitSummary, grid, points, draws) -> dict:
    res = lpml(points, draws, grid)
    m = {"mae": mae(summary.mean_intensity, grid), "lpml": res.lpml}
    if summary.dahl_z is not None:
        m["mae_dahl"] = mae(summary.dahl_intensity(), grid)
    return m


def cmd_fit(args) -> int:
    opts = _options(args, "fit")
    out = _out_dir(args.out)
    grid, points = _load_input(opts, args.input)
    cfg = MfmConfig(gamma=float(opts["gamma"]), a=float(opts["a"]), b=float(opts["b"]),
                    k_prior=TruncatedPoisson(float(opts["k_prior_mean"])))
    t0 = time.perf_counter()
    draws = run_chain(grid, cfg, int(opts["iters"]), int(opts["burnin"]), seed=int(opts["seed"]),
                      k_init=int(opts["k_init"]), scan=opts["scan"], thin=int(opts["thin"]))
    log.info("sampled %d sweeps in %.1fs", opts["iters"], time.perf_counter() - t0)
    summary = summarize(draws, dahl_cap=int(opts["dahl_cap"]),
                        dahl_thin=None if opts["dahl_thin"] is None else int(opts["dahl_thin"]))
    if summary.dahl_note:
        log.warning("Dahl summary skipped: %s", summary.dahl_note)
    summary.metrics = _metrics(summary, grid, points, draws)

    gi.write_grid_csv(out / "counts.csv", grid.resolution, grid.counts)
    if points is not None:
        gi.write_points_csv(out / "points.csv", points)
    save_draws(draws, out / ("draws.ndjson.gz" if opts["compress"] else "draws.ndjson"))
    (out / "summary.json").write_text(summary.to_json())
    gi.write_grid_csv(out / "intensity_mean.csv", grid.resolution, summary.mean_intensity)
    gi.write_grid_csv(out / "intensity_mean_density.csv", grid.resolution, summary.mean_intensity_density)
    if summary.dahl_z is not None:
        gi.write_grid_csv(out / "intensity_dahl.csv", grid.resolution, summary.dahl_intensity())
        gi.write_grid_csv(out / "clusters_dahl.csv", grid.resolution, summary.dahl_z + 1)
    log.info("k mode %d, MAE %.4f, LPML %.2f", summary.k_mode, summary.metrics["mae"], summary.metrics["lpml"])
    return 0


def _find_draws(fit_dir: Path) -> Path:
    for name in ("draws.ndjson", "draws.ndjson.gz"):
        if (fit_dir / name).is_file():
            return fit_dir / name
    raise UsageError(f"no draws archive in {fit_dir}")


def cmd_evaluate(args) -> int:
    opts = _options(args, "evaluate")
    truth = None
    if opts["truth"]:
        tr, truth = gi.read_grid_csv(opts["truth"], dtype=int)
    reports = []
    for fit_dir in map(Path, args.fit):
        if not fit_dir.is_dir():
            raise UsageError(f"fit directory not found: {fit_dir}")
        try:
            draws = load_draws(_find_draws(fit_dir))
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise UsageError(f"{fit_dir}: unreadable draws archive ({exc})") from None
        grid = gi.read_grid_counts(fit_dir / "counts.csv")
        if grid.resolution != draws.resolution:
            raise UsageError(f"{fit_dir}: counts resolution {grid.resolution} != draws resolution {draws.resolution}")
        points = gi.read_points_csv(fit_dir / "points.csv") if (fit_dir / "points.csv").is_file() else None
        summary = summarize(draws)
        res = lpml(points, draws, grid)
        report = MetricsReport(mae=mae(summary.mean_intensity, grid), lpml=res.lpml,
                               per_point_cpo=res.cpo, resolution=grid.resolution)
        if summary.dahl_z is not None:
            report.mae_dahl = mae(summary.dahl_intensity(), grid)
        if truth is not None:
            if tr != grid.resolution:
                raise UsageError(f"truth resolution {tr} does not match fit resolution {grid.resolution}")
            if summary.dahl_z is None:
                raise UsageError(f"{fit_dir}: Rand index needs a Dahl clustering (n={grid.n} above the cap)")
            report.rand_index = rand_index(summary.dahl_z, truth)
        if opts["cpo"] and len(args.fit) == 1:
            with open(opts["cpo"], "w") as fh:
                fh.write("point,log_cpo\n")
                for j, v in enumerate(res.cpo):
                    fh.write(f"{j},{v!r}\n")
        reports.append((str(fit_dir), report))

    order = sorted(range(len(reports)), key=lambda j: -reports[j][1].lpml)
    result = {
        "fits": [dict(path=p, **r.to_dict()) for p, r in reports],
        "lpml_ranking": [reports[j][0] for j in order],
        "best_by_lpml": reports[order[0]][0],
    }
    text = json.dumps(result, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    opts = _options(args, "bench")
    out = _out_dir(args.out)
    spec = _scenario_spec(opts)
    fit = FitSettings(total_iters=int(opts["iters"]), burnin=int(opts["burnin"]))
    workers = default_workers() if opts["workers"] is None else int(opts["workers"])
    t0 = time.perf_counter()
    summary = run_replicates(spec, int(opts["replicates"]), fit, workers=workers)
    log.info("%d replicates in %.1fs", summary.n_replicates, time.perf_counter() - t0)
    (out / "bench_summary.json").write_text(summary.to_json())
    summary.write_replicates_csv(out / "replicates.csv")
    log.info("K recovered in %.0f%% of replicates, mean RI %.3f",
             100 * summary.k_recovery_rate, summary.mean_rand_index)
    return 0


# ----------------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfm-nhpp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file (flags override it)")
        return sp

    s = common(sub.add_parser("simulate", help="generate a synthetic grid with known clusters"))
    s.add_argument("--scenario", type=int)
    s.add_argument("--layout", choices=["bands-3", "blocks-6"])
    s.add_argument("--layout-file", dest="layout_file")
    s.add_argument("--lambdas")
    s.add_argument("--resolution", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--points", action="store_const", const=True, help="also write points.csv")
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_simulate)

    f = common(sub.add_parser("fit", help="run the sampler on a counts grid or raw catalog"))
    f.add_argument("--input", required=True)
    f.add_argument("--resolution", type=int)
    f.add_argument("--frame", choices=["global", "bbox"])
    f.add_argument("--min-magnitude", dest="min_magnitude", type=float)
    f.add_argument("--iters", type=int)
    f.add_argument("--burnin", type=int)
    f.add_argument("--seed", type=int)
    f.add_argument("--k-init", dest="k_init", type=int)
    f.add_argument("--gamma", type=float)
    f.add_argument("--a", type=float)
    f.add_argument("--b", type=float)
    f.add_argument("--k-prior-mean", dest="k_prior_mean", type=float)
    f.add_argument("--scan", choices=["systematic", "random"])
    f.add_argument("--thin", type=int)
    f.add_argument("--dahl-cap", dest="dahl_cap", type=int)
    f.add_argument("--dahl-thin", dest="dahl_thin", type=int)
    f.add_argument("--compress", action="store_const", const=True, help="gzip the draws archive")
    f.add_argument("--out", default=".")
    f.set_defaults(func=cmd_fit)

    e = common(sub.add_parser("evaluate", help="MAE, LPML and Rand index of one or more fits"))
    e.add_argument("--fit", nargs="+", required=True, help="fit output directories")
    e.add_argument("--truth")
    e.add_argument("--cpo", help="write per-point log CPO terms to this CSV (single fit)")
    e.add_argument("--out", help="metrics JSON path (default stdout)")
    e.set_defaults(func=cmd_evaluate)

    b = common(sub.add_parser("bench", help="replicated simulation study"))
    b.add_argument("--scenario", type=int)
    b.add_argument("--layout", choices=["bands-3", "blocks-6"])
    b.add_argument("--lambdas")
    b.add_argument("--resolution", type=int)
    b.add_argument("--replicates", type=int)
    b.add_argument("--workers", type=int, help="default from MFM_NHPP_WORKERS, else 1")
    b.add_argument("--seed", type=int)
    b.add_argument("--iters", type=int)
    b.add_argument("--burnin", type=int)
    b.add_argument("--out", default=".")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"mfm-nhpp: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (UsageError, gi.ConfigError, ValueError, OSError) as exc:
        print(f"mfm-nhpp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
