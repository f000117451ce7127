"""Text and JSON reports of seed and fit results."""
from __future__ import annotations

import json
import math

import numpy as np

from . import uncertainty as unc


def format_pm(value, sigma):
    """
    ``value ± sigma`` with sigma rounded to two significant digits and the
    value rounded to the same decimal place.
    """
    value, sigma = float(value), float(sigma)
    if not (math.isfinite(sigma) and sigma > 0):
        return f"{value:.4g}"
    e = math.floor(math.log10(sigma))
    if round(sigma, 1 - e) >= 10 ** (e + 1):
        e += 1
    mag = math.floor(math.log10(abs(value))) if value != 0 else e
    top = max(mag, e)
    if top >= 5 or top <= -4:
        scale = 10.0**top
        v, s = value / scale, sigma / scale
        d = max(top - e + 1, 0)
        return f"({v:.{d}f} ± {s:.{d}f})e{top:+d}"
    d = max(1 - e, 0)
    q = 10.0 ** (e - 1)
    if d == 0:
        return f"{round(value / q) * q:.0f} ± {round(sigma / q) * q:.0f}"
    return f"{value:.{d}f} ± {sigma:.{d}f}"


def _table(header, rows):
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    fmt = "  ".join(("{:<%d}" if i == 0 else "{:>%d}") % w for i, w in enumerate(widths))
    lines = [fmt.format(*header), "  ".join("-" * w for w in widths)]
    lines += [fmt.format(*r) for r in rows]
    return "\n".join(lines)


def seed_table(seeds):
    """Stage-1 results, one column per region."""
    regions = [s.region for s in seeds]
    n_max = max(sum(1 for k in s.params if k.startswith("N")) for s in seeds)
    rows = []
    for key, label in (("N", "Nc"), ("lam", "lambda [1/d]"), ("t0", "t0 [d]")):
        for i in range(1, n_max + 1):
            rows.append([f"{label} ({i})"] + [
                f"{s.params[f'{key}{i}']:.4g}" if f"{key}{i}" in s.params else "" for s in seeds
            ])
    rows.append(["Cc"] + [f"{s.params['C']:.4g}" for s in seeds])
    rows.append(["Sc [1/d]"] + [f"{s.params['S']:.4g}" for s in seeds])
    rows.append(["chi2"] + [f"{s.chi2:.3f}" for s in seeds])
    rows.append(["N.D.F."] + [str(s.ndf) for s in seeds])
    rows.append(["Prob (%)"] + [f"{100 * s.prob:.1f}" for s in seeds])
    return _table(["parameter"] + regions, rows)


def fit_summary(fit, level=0.95):
    """Machine-readable summary of a global fit."""
    out = {"regions": {}, "chi2": round(fit.chi2, 10), "ndf": fit.ndf, "prob": round(fit.prob, 10),
           "iterations": fit.iterations, "converged": fit.converged,
           "derivative_mode": fit.derivative_mode, "n_params": len(fit.layout), "n_data": fit.n_data}
    z = unc.z_value(level)
    for spec in fit.layout.specs:
        r = spec.region
        params = {}
        for j, (reg, role, peak) in enumerate(fit.layout.entries):
            if reg == r:
                params[fit.layout.label(j).split(".", 1)[1]] = {"value": float(fit.B[j]), "sigma": float(fit.sigmas[j])}
        cfrs = []
        for est in unc.region_cfrs(fit, r):
            cfrs.append({
                "peak": est.peak + 1 if est.peak != "combined" else "combined",
                "value": est.value, "sigma": est.sigma,
                "lower": est.value - z * est.sigma, "upper": est.value + z * est.sigma,
            })
        out["regions"][r] = {"parameters": params, "cfr": cfrs}
    if fit.layout.fit_kernel:
        k = unc.kernel_summary(fit)
        out["kernel"] = {
            "alpha": {"value": k.alpha, "sigma": k.sigma_alpha},
            "beta": {"value": k.beta, "sigma": k.sigma_beta},
            "mean": {"value": k.mean, "sigma": k.sigma_mean},
            "cv": {"value": k.cv, "sigma": k.sigma_cv},
            "rho_alpha_beta": k.rho,
        }
    return out


def summary_json(summary):
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def fit_table(fit, level=0.95):
    """Aligned text table in the layout of a results table: one column per region."""
    regions = [s.region for s in fit.layout.specs]
    n_max = max(s.n_peaks for s in fit.layout.specs)

    def cell(r, role, peak=None):
        try:
            j = fit.layout.index(r, role, peak)
        except KeyError:
            return ""
        return format_pm(fit.B[j], fit.sigmas[j])

    rows = []
    for role, label in (("Nc", "Nc"), ("lam", "lambda [1/d]"), ("t0", "t0 [d]")):
        for i in range(n_max):
            rows.append([f"{label} ({i + 1})"] + [cell(r, role, i) for r in regions])
    rows.append(["Cc"] + [cell(r, "Cc") for r in regions])
    rows.append(["Sc [1/d]"] + [cell(r, "Sc") for r in regions])
    for i in range(n_max):
        rows.append([f"Nd ({i + 1})"] + [cell(r, "Nd", i) for r in regions])
    rows.append(["Cd"] + [cell(r, "Cd") for r in regions])
    rows.append(["Sd [1/d]"] + [cell(r, "Sd") for r in regions])
    cfr = {r: unc.region_cfrs(fit, r) for r in regions}
    for i in range(n_max):
        row = [f"CFR (%) ({i + 1})"]
        for r in regions:
            est = [e for e in cfr[r] if e.peak == i]
            row.append(format_pm(100 * est[0].value, 100 * est[0].sigma) if est else "")
        rows.append(row)
    rows.append(["CFR (%) combined"] + [
        next((format_pm(100 * e.value, 100 * e.sigma) for e in cfr[r] if e.peak == "combined"), "") for r in regions
    ])
    rows = [row for row in rows if any(row[1:])]
    text = [_table(["parameter"] + regions, rows), ""]
    if fit.layout.fit_kernel:
        k = unc.kernel_summary(fit)
        text += [
            f"alpha        {format_pm(k.alpha, k.sigma_alpha)}",
            f"beta [1/d]   {format_pm(k.beta, k.sigma_beta)}",
            f"mu [d]       {format_pm(k.mean, k.sigma_mean)}",
            f"CV           {format_pm(k.cv, k.sigma_cv)}",
            f"rho(a,b)     {k.rho:.3f}",
        ]
    text += [
        f"chi2         {fit.chi2:.1f}",
        f"N.D.F.       {fit.ndf}",
        f"Prob (%)     {100 * fit.prob:.1f}",
        f"parameters   {len(fit.layout)}",
        f"iterations   {fit.iterations}{'' if fit.converged else ' (not converged)'}",
    ]
    return "\n".join(text) + "\n"


def band_grid(series_list, step):
    lo = min(s.t[0] for s in series_list)
    hi = max(s.t[-1] for s in series_list)
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)
