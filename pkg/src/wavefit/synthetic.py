"""
Synthetic data: daily series drawn from known models, and the published
six-country Omicron values as ready-made models and configs.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
from importlib import resources

import numpy as np
from . import model as wm
from .config import yaml_load
from .ingest import WeeklySeries, deaths_window


def reference_values():
    """Published values of the six-country Omicron analysis (see ``data/omicron_2022.yaml``)."""
    text = resources.files("wavefit").joinpath("data/omicron_2022.yaml").read_text()
    return yaml_load(text)


def reference_models(which="best_fit"):
    """
    Region models built from the published values.

    ``which="best_fit"`` uses the global-fit values and kernel;
    ``"stage1"`` uses the Monte Carlo start values with the start kernel and
    zero deaths terms.
    """
    ref = reference_values()
    models = []
    if which == "best_fit":
        kernel = wm.GammaKernel(ref["kernel"]["alpha"][0], ref["kernel"]["beta"][0])
    else:
        kernel = wm.GammaKernel(ref["kernel_init"]["alpha"], ref["kernel_init"]["beta"])
    for code, r in ref["regions"].items():
        dropped = {i - 1 for i in r["drop_death_peaks"]}
        if which == "best_fit":
            b = r["best_fit"]
            peaks = [wm.GompertzPeak(n[0], lam[0], t0[0]) for n, lam, t0 in zip(b["Nc"], b["lam"], b["t0"])]
            keep = [i for i in range(len(peaks)) if i not in dropped]
            models.append(wm.RegionModel(
                code, peaks, [b["Nd"][i][0] for i in keep],
                wm.LinearBackground(b["Cc"][0], b["Sc"][0]), wm.LinearBackground(b["Cd"][0], b["Sd"][0]),
                kernel, death_peaks=keep,
            ))
        elif which == "stage1":
            s = r["stage1"]
            peaks = [wm.GompertzPeak(n, lam, t0) for n, lam, t0 in zip(s["N"], s["lam"], s["t0"])]
            keep = [i for i in range(len(peaks)) if i not in dropped]
            models.append(wm.RegionModel(
                code, peaks, [0.0] * len(keep),
                wm.LinearBackground(s["C"], s["S"]), wm.LinearBackground(0.0, 0.0),
                kernel, death_peaks=keep,
            ))
        else:
            raise ValueError(f"unknown value set {which!r}")
    return models


def reference_config(data_path, output="out", trials=1):
    """
    Config mapping for the six-country analysis with search boxes pinned to
    the published start values.
    """
    ref = reference_values()
    regions = {}
    for code, r in ref["regions"].items():
        s = r["stage1"]
        box = {"C": s["C"], "S": s["S"]}
        for i, (n, lam, t0) in enumerate(zip(s["N"], s["lam"], s["t0"]), start=1):
            box.update({f"N{i}": n, f"lam{i}": lam, f"t0{i}": t0})
        regions[code] = {
            "start": r["start"].isoformat() if isinstance(r["start"], dt.date) else r["start"],
            "cutoff": str(ref["cutoff"]),
            "peaks": len(s["N"]),
            "drop_death_peaks": r["drop_death_peaks"],
            "inflation": r["inflation"],
            "box": box,
        }
    return {
        "data": {"path": str(data_path), "columns": "who"},
        "output": str(output),
        "regions": regions,
        "seed": {"trials": trials, "rng_seed": 0},
        "fit": {"alpha": ref["kernel_init"]["alpha"], "beta": ref["kernel_init"]["beta"]},
    }


def daily_means(mdl, start, first, last, step=wm.DEFAULT_STEP):
    """Expected daily cases and deaths from ``first`` to ``last`` (inclusive) on ``mdl``'s axis."""
    n = (last - first).days + 1
    t = (first - start).days + np.arange(n, dtype=float)
    return t, wm.cases_curve(mdl, t), wm.deaths_curve(mdl, t, step)


def simulate_daily(models, starts, cutoff, rng, rel_noise=0.05, weekday=0.0, lead_days=0):
    """
    Daily rows ``(date, region, new_cases, new_deaths)`` drawn around each model.

    Counts are ``mean * (1 + weekday effect) * (1 + rel_noise * N(0,1))``,
    rounded and clipped at zero; the weekday effect is a fixed sinusoid of
    amplitude ``weekday`` summing to zero over a week.
    """
    rows = []
    dow = weekday * np.sin(2 * np.pi * np.arange(7) / 7)
    for mdl in models:
        start = starts[mdl.region]
        first = start - dt.timedelta(days=lead_days)
        t, mc, md = daily_means(mdl, start, first, cutoff)
        for k, tk in enumerate(t):
            day = start + dt.timedelta(days=int(tk))
            w = dow[day.toordinal() % 7]
            c = mc[k] * (1 + w) * (1 + rel_noise * rng.standard_normal())
            d = md[k] * (1 + w) * (1 + rel_noise * rng.standard_normal())
            rows.append((day, mdl.region, max(round(c), 0), max(round(d), 0)))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


WEEK_PATTERN = np.array([-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5]) / np.sqrt(7.0 / 6.0)


def consistent_daily(models, starts, cutoff, rng, rel_sigma=(0.02, 0.03), step=0.05):
    """
    Daily rows whose weekly aggregation is exactly model-plus-Gaussian-noise.

    Each week's daily values are ``m + e + s * p_j`` where ``m`` is the model at
    the week's mean day, ``e ~ N(0, s**2 / 7)`` and ``p`` is a fixed pattern
    of zero mean and unit sample variance. Aggregation then returns ``m + e``
    with standard error ``s / sqrt(7)``, so the weekly chi-square is a true
    chi-square. ``s / sqrt(7)`` is ``rel_sigma`` times each curve's maximum.
    Weeks are aligned on each region's start date.
    """
    rows = []
    for mdl in models:
        start = starts[mdl.region]
        n = ((cutoff - start).days + 1) // 7
        t = 7.0 * np.arange(n) + 3.0
        mc = wm.cases_curve(mdl, t)
        md = wm.deaths_curve(mdl, t, step)
        sc = rel_sigma[0] * mc.max() * np.sqrt(7.0)
        sd = rel_sigma[1] * md.max() * np.sqrt(7.0)
        for k in range(n):
            c = mc[k] + rng.normal(0.0, sc / np.sqrt(7.0)) + sc * WEEK_PATTERN
            d = md[k] + rng.normal(0.0, sd / np.sqrt(7.0)) + sd * WEEK_PATTERN
            for j in range(7):
                day = start + dt.timedelta(days=7 * k + j)
                rows.append((day, mdl.region, float(c[j]), float(d[j])))
        for j in range(7 * n, (cutoff - start).days + 1):
            rows.append((start + dt.timedelta(days=j), mdl.region, 0.0, 0.0))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def daily_csv(rows,columns=("Date_reported", "Country_code", "New_cases", "New_deaths")):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for day, region, c, d in rows:
        w.writerow([day.isoformat(), region, c, d])
    return buf.getvalue()


def weekly_from_model(mdl, n_cases, n_deaths, rel_sigma=(0.02, 0.03), rng=None, step=0.05, origin=dt.date(2021, 1, 1)):
    """
    Weekly series sampled directly from a model at ``t = 7k + 3`` (cases) and
    ``14 + 7k + 3`` (deaths) with Gaussian errors proportional to each
    curve's maximum. ``rng=None`` gives noiseless data.
    """
    tc = 7.0 * np.arange(n_cases) + 3.0
    td = 14.0 + 7.0 * np.arange(n_deaths) + 3.0
    yc = wm.cases_curve(mdl, tc)
    yd = wm.deaths_curve(mdl, td, step)
    sc = np.full_like(yc, rel_sigma[0] * yc.max())
    sd = np.full_like(yd, rel_sigma[1] * yd.max())
    if rng is not None:
        yc = yc + rng.normal(0.0, sc)
        yd = yd + rng.normal(0.0, sd)
    return (
        WeeklySeries(mdl.region, "cases", origin, tc, yc, sc, np.full(n_cases, 7)),
        WeeklySeries(mdl.region, "deaths", origin, td, yd, sd, np.full(n_deaths, 7)),
    )


def reference_starts():
    ref = reference_values()
    return {code: r["start"] if isinstance(r["start"], dt.date) else dt.date.fromisoformat(r["start"])
            for code, r in ref["regions"].items()}


def reference_deaths_starts():
    return {k: deaths_window(v) for k, v in reference_starts().items()}
