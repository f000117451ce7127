"""
Command line front end: ``wavefit {ingest,seed,fit,report} --config run.yaml``.

Every stage reads the same config and writes into the output directory;
``fit`` refuses to run on seeds produced from a different config or data file.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import model as wm
from . import report as rep
from . import uncertainty as unc
from .config import ConfigError, load_config
from .gls import FitError, FitResult, iterate_fit
from .ingest import DataError, WeeklySeries, aggregate_weekly, inflate_errors, read_daily_csv
from .seed import SearchBox, SeedResult, default_box, mc_search

log = logging.getLogger("wavefit")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_STALE = 5


class StaleError(RuntimeError):
    """A stage output does not belong to the current config or data."""


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _update_manifest(cfg, stage):
    path = cfg.output / "run_manifest.json"
    man = json.loads(path.read_text()) if path.exists() else {}
    man.update({
        "config_hash": cfg.stage_hash(),
        "data_hash": cfg.data_hash(),
        "rng_algorithm": cfg.seed.rng_algorithm,
        "rng_seed": cfg.seed.rng_seed,
        "software_version": __version__,
    })
    man.setdefault("timestamps", {})[stage] = dt.datetime.now(dt.timezone.utc).isoformat()
    _write(path, _dump(man))


def weekly_path(out, region, metric):
    return out / "weekly" / f"{region}_{metric}.csv"


def ingest(cfg):
    """Weekly series per configured region: ``{region: (cases, deaths)}``."""
    raw = read_daily_csv(cfg.data_path, cfg.columns, cfg.negative, regions=[r.name for r in cfg.regions])
    weekly = {}
    for r in cfg.regions:
        cases = aggregate_weekly(raw[(r.name, "cases")], r.start, r.cutoff)
        deaths = aggregate_weekly(raw[(r.name, "deaths")], r.deaths_start, r.cutoff, origin=r.start)
        weekly[r.name] = (cases, deaths)
    return weekly


def load_weekly(cfg):
    weekly = {}
    for r in cfg.regions:
        pair = []
        for metric in ("cases", "deaths"):
            p = weekly_path(cfg.output, r.name, metric)
            if not p.exists():
                raise StaleError(f"missing {p}; run 'ingest' first")
            pair.append(WeeklySeries.from_csv(p.read_text()))
        weekly[r.name] = tuple(pair)
    return weekly


def cmd_ingest(cfg):
    weekly = ingest(cfg)
    summary = {"regions": {}, "total": {"cases": 0, "deaths": 0}, "data_hash": cfg.data_hash(),
               "config_hash": cfg.stage_hash()}
    for name, (cases, deaths) in weekly.items():
        _write(weekly_path(cfg.output, name, "cases"), cases.to_csv())
        _write(weekly_path(cfg.output, name, "deaths"), deaths.to_csv())
        summary["regions"][name] = {"cases": len(cases), "deaths": len(deaths)}
        summary["total"]["cases"] += len(cases)
        summary["total"]["deaths"] += len(deaths)
    _write(cfg.output / "ingest_summary.json", _dump(summary))
    _update_manifest(cfg, "ingest")
    return summary


def region_box(cfg, rcfg, series):
    box = default_box(series, rcfg.peaks, cfg.seed.trials, cfg.seed.rng_seed)
    bounds = dict(box.bounds)
    bounds.update({k: tuple(v) for k, v in rcfg.box.items()})
    trials = cfg.seed.trials
    if all(lo == hi for lo, hi in bounds.values()):
        trials = 1
    return SearchBox(bounds, trials, cfg.seed.rng_seed)


def cmd_seed(cfg):
    weekly = load_weekly(cfg)
    seeds = []
    for r in cfg.regions:
        box = region_box(cfg, r, weekly[r.name][0])
        res = mc_search(box, weekly[r.name][0], workers=cfg.seed.workers, polish=cfg.seed.polish)
        log.info("%s: chi2 %.3f / %d", r.name, res.chi2, res.ndf)
        seeds.append(res)
    payload = {
        "config_hash": cfg.stage_hash(),
        "data_hash": cfg.data_hash(),
        "seeds": [s.to_dict() for s in seeds],
    }
    _write(cfg.output / "seed.json", _dump(payload))
    _write(cfg.output / "seed_table.txt", rep.seed_table(seeds) + "\n")
    _update_manifest(cfg, "seed")
    return seeds


def load_seeds(cfg):
    p = cfg.output / "seed.json"
    if not p.exists():
        raise StaleError(f"missing {p}; run 'seed' first")
    payload = json.loads(p.read_text())
    if payload["config_hash"] != cfg.stage_hash() or payload["data_hash"] != cfg.data_hash():
        raise StaleError("seed.json was produced from a different config or data file; re-run 'seed'")
    by_name = {d["region"]: SeedResult.from_dict(d) for d in payload["seeds"]}
    return [by_name[r.name] for r in cfg.regions]


def fit_inputs(cfg, weekly, seeds):
    """Start models and error-inflated data for the global fit."""
    kernel = wm.GammaKernel(cfg.fit.alpha, cfg.fit.beta)
    models, data = [], []
    for r, s in zip(cfg.regions, seeds):
        peaks = s.peaks()
        cases, deaths = weekly[r.name]
        if r.inflation_cases > 0:
            cases = inflate_errors(cases, r.inflation_cases, max(p.height for p in peaks))
        if r.inflation_deaths > 0:
            deaths = inflate_errors(deaths, r.inflation_deaths, float(np.max(deaths.y)))
        models.append(
            wm.RegionModel(
                r.name, peaks, [0.0] * len(r.death_peaks),
                wm.LinearBackground(s.params["C"], s.params["S"]), wm.LinearBackground(0.0, 0.0),
                kernel, death_peaks=r.death_peaks,
            )
        )
        data.append((cases, deaths))
    return models, data, kernel


def write_fit_outputs(cfg, fit, data):
    level = cfg.fit.level
    _write(cfg.output / "fit.json", _dump({**fit.to_dict(), "config_hash": cfg.stage_hash(),
                                            "data_hash": cfg.data_hash()}))
    _write(cfg.output / "report.txt", rep.fit_table(fit, level))
    _write(cfg.output / "report.json", rep.summary_json(rep.fit_summary(fit, level)))
    for (cases, deaths) in data:
        region = cases.region
        for series, metric in ((cases, "cases"), (deaths, "deaths")):
            t = rep.band_grid([series], cfg.fit.band_step)
            band = unc.curve_band(metric, region, fit, t, level)
            _write(cfg.output / "bands" / f"{region}_{metric}.csv", band.to_csv())
    if fit.layout.fit_kernel:
        t = np.arange(0.0, 60.0 + 1e-9, 0.5)
        _write(cfg.output / "bands" / "kernel.csv", unc.kernel_band(fit, t, level).to_csv())


def cmd_fit(cfg):
    weekly = load_weekly(cfg)
    seeds = load_seeds(cfg)
    models, data, kernel = fit_inputs(cfg, weekly, seeds)
    fit = iterate_fit(
        models, data, kernel_init=kernel, tol=cfg.fit.tol, max_iter=cfg.fit.max_iter,
        step=cfg.fit.step, mode=cfg.fit.derivative_mode, fixed_kernel=cfg.fit.fixed_kernel,
    )
    write_fit_outputs(cfg, fit, data)
    _update_manifest(cfg, "fit")
    if not fit.converged:
        raise FitError(f"no convergence after {fit.iterations} iterations", fit.chi2_trace)
    return fit


def cmd_report(cfg):
    p = cfg.output / "fit.json"
    if not p.exists():
        raise StaleError(f"missing {p}; run 'fit' first")
    payload = json.loads(p.read_text())
    fit = FitResult.from_dict(payload)
    text = rep.fit_table(fit, cfg.fit.level)
    _write(cfg.output / "report.txt", text)
    _write(cfg.output / "report.json", rep.summary_json(rep.fit_summary(fit, cfg.fit.level)))
    return text


def build_parser():
    p = argparse.ArgumentParser(prog="wavefit", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("ingest", "aggregate daily data into weekly series"),
        ("seed", "Monte Carlo start values per region"),
        ("fit", "global fit, report and confidence bands"),
        ("report", "re-render the report from fit.json"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--out", type=Path, help="output directory (overrides the config)")
        s.add_argument("--seed", type=int, help="RNG seed (overrides seed.rng_seed)")
        s.add_argument("--fixed-kernel", action="store_true", help="keep the gamma kernel at its start values")
        s.add_argument("--derivative-mode", choices=wm.DERIVATIVE_MODES)
    return p


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("WAVEFIT_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.output = args.out.resolve()
        if args.seed is not None:
            cfg.seed.rng_seed = args.seed
        if args.fixed_kernel:
            cfg.fit.fixed_kernel = True
        if args.derivative_mode:
            cfg.fit.derivative_mode = args.derivative_mode
        if not cfg.data_path.exists():
            raise DataError(f"data file not found: {cfg.data_path}")
        if args.command == "ingest":
            summary = cmd_ingest(cfg)
            print(_dump(summary["total"]), end="")
        elif args.command == "seed":
            print(rep.seed_table(cmd_seed(cfg)))
        elif args.command == "fit":
            cmd_fit(cfg)
            print((cfg.output / "report.txt").read_text(), end="")
        else:
            print(cmd_report(cfg), end="")
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except StaleError as exc:
        log.error("%s", exc)
        return EXIT_STALE
    except (FitError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        trace = getattr(exc, "trace", None)
        if trace:
            log.error("chi2 trace: %s", ", ".join(f"{c:.6g}" for c in trace))
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
