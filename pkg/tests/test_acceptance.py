"""
Acceptance checks, one per criterion.

Each check returns ``(passed, detail)``; the pytest wrappers assert on it and
the terminal summary (see ``conftest.py``) prints one PASS/FAIL line per
criterion. Run this file directly to print the lines without pytest:

    python tests/test_acceptance.py
"""
import contextlib
import datetime as dt
import io
import json
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import KERNEL, perturbed_start, two_region_data, two_region_truth  # noqa: E402

from wavefit import cli  # noqa: E402
from wavefit import model as wm  # noqa: E402
from wavefit import synthetic as syn  # noqa: E402
from wavefit import uncertainty as unc  # noqa: E402
from wavefit.gls import FitResult, Layout, RegionSpec, iterate_fit  # noqa: E402
from wavefit.stats import chi2_prob  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
WHO_SNAPSHOT = ROOT / "data" / "WHO-COVID-19-global-data.csv"
REFERENCE_CONFIG = ROOT / "configs" / "omicron_2022.yaml"

RESULTS = {}


def record(number, title):
    def wrap(fn):
        def run():
            ok, detail = fn()
            RESULTS[number] = (title, bool(ok), detail)
            return bool(ok), detail

        run.number, run.title = number, title
        return run

    return wrap


@record(1, "kernel identities")
def criterion_1():
    k = unc.summarize_kernel(8.0, 0.51, np.diag([3.1**2, 0.21**2]))
    ok = abs(k.mean - 8.0 / 0.51) < 1e-12 and abs(8.0 / 0.51 - 15.71) < 0.03 and abs(k.cv - 0.354) < 1e-3
    return ok, f"mu={k.mean:.4f} (|mu-15.71|={abs(k.mean - 15.71):.4f} < 0.03), CV={k.cv:.4f}"


@record(2, "chi-square probability")
def criterion_2():
    cases = [((176.5, 174), 0.434, 0.001), ((2.84, 12), 0.997, 0.001), ((19.1, 17), 0.321, 0.002)]
    parts, ok = [], True
    for (c, n), want, tol in cases:
        got = chi2_prob(c, n)
        good = abs(got - want) <= tol
        ok &= good
        parts.append(f"P({c},{n})={got:.5f} vs {want}±{tol} {'ok' if good else 'OUT'}")
    return ok, "; ".join(parts)


@record(3, "CFR arithmetic from published normalizations")
def criterion_3():
    table = {"US": (6.5e4, 22.0e6, 0.295), "IN": (1.78e4, 7.68e6, 0.232), "BR": (3.30e4, 6.70e6, 0.49),
             "DE": (1.62e4, 12.56e6, 0.129)}
    parts, ok = [], True
    for code, (nd, nc, want) in table.items():
        r, _ = unc.ratio_with_error(nd, nc, 0.0, 0.0, 0.0)
        rel = abs(100 * r - want) / want
        ok &= rel < 0.005
        parts.append(f"{code} {100 * r:.4f}% vs {want}% (rel {100 * rel:.2f}%)")
    return ok, "; ".join(parts)


def _compare_to_published(fit, n_sigma):
    ref = syn.reference_values()
    worst, where = 0.0, ""
    for code, r in ref["regions"].items():
        b = r["best_fit"]
        items = []
        for i in range(len(b["Nc"])):
            items += [("Nc", i, b["Nc"][i]), ("lam", i, b["lam"][i]), ("t0", i, b["t0"][i])]
            if b["Nd"][i] is not None:
                items.append(("Nd", i, b["Nd"][i]))
        items += [(k, None, b[k]) for k in ("Cc", "Sc", "Cd", "Sd")]
        for role, peak, (v, s) in items:
            z = abs(fit.value(code, role, peak) - v) / s
            if z > worst:
                worst, where = z, f"{code}.{role}{'' if peak is None else peak + 1}"
    return worst <= n_sigma, worst, where


@record(4, "full-pipeline regression on the WHO snapshot")
def criterion_4():
    if not WHO_SNAPSHOT.exists():
        return False, f"no vendored daily snapshot at {WHO_SNAPSHOT.relative_to(ROOT)}; criterion not evaluable"
    t = time.time()
    with tempfile.TemporaryDirectory() as out:
        for stage in ("ingest", "seed", "fit"):
            with contextlib.redirect_stdout(io.StringIO()):
                code = cli.main([stage, "--config", str(REFERENCE_CONFIG), "--out", out])
            if code != cli.EXIT_OK:
                return False, f"stage {stage} exited {code}"
        summary = json.loads((Path(out) / "ingest_summary.json").read_text())["total"]
        fit = FitResult.from_dict(json.loads((Path(out) / "fit.json").read_text()))
    elapsed = time.time() - t
    one, worst, where = _compare_to_published(fit, 1.0)
    two = worst <= 2.0
    chi_ok = 160 <= fit.chi2 <= 195
    ok = fit.converged and chi_ok and two and elapsed < 60
    return ok, (f"weeks {summary['cases']}/{summary['deaths']}, chi2={fit.chi2:.1f}/{fit.ndf}, worst |z|={worst:.2f} "
                f"at {where} (1 sigma {'met' if one else 'missed'}), {elapsed:.1f} s")


@record(5, "analytic partials against finite differences")
def criterion_5():
    rng = np.random.default_rng(20220425)
    t_start = time.time()
    worst_c = worst_d = 0.0
    h = 1e-5
    for _ in range(200):
        lam, t0 = rng.uniform(0.04, 0.12), rng.uniform(30, 120)
        t = np.array([t0 + rng.uniform(-2.5, 3.5) / lam])
        which = rng.integers(2)
        d = wm.partials_cases(t, t0, lam)[which][0]
        if which == 0:
            fd = (wm.gompertz_rate(t, t0 * (1 + h), lam) - wm.gompertz_rate(t, t0 * (1 - h), lam)) / (2 * h * t0)
        else:
            fd = (wm.gompertz_rate(t, t0, lam * (1 + h)) - wm.gompertz_rate(t, t0, lam * (1 - h))) / (2 * h * lam)
        worst_c = max(worst_c, abs(d - fd[0]) / abs(d))
    for _ in range(200):
        lam, t0 = rng.uniform(0.04, 0.12), rng.uniform(30, 120)
        a = rng.uniform(4.0, 12.0)
        b = a / rng.uniform(12.0, 20.0)
        t = np.array([t0 + a / b + rng.uniform(-1.5, 2.5) / lam])
        p = np.array([t0, lam, a, b])
        which = rng.integers(4)
        d = wm.partials_deaths(t, t0, lam, wm.GammaKernel(a, b), mode="exact")[which][0]

        def shape(q):
            return wm.death_shape(t, q[0], q[1], wm.GammaKernel(q[2], q[3]))[0]

        up, dn = p.copy(), p.copy()
        up[which] *= 1 + h
        dn[which] *= 1 - h
        fd = (shape(up) - shape(dn)) / (2 * h * p[which])
        worst_d = max(worst_d, abs(d - fd) / abs(d))
    elapsed = time.time() - t_start
    ok = worst_c < 1e-5 and worst_d < 1e-4 and elapsed < 30
    return ok, f"max rel err cases {worst_c:.2e} (< 1e-5), deaths {worst_d:.2e} (< 1e-4), {elapsed:.1f} s"


def _mass(t0, lam, kernel, upper, step=0.25):
    t = np.arange(t0 - 60.0 / lam, upper + step / 2, step)
    d = wm.death_shape(t, t0, lam, kernel)
    return float(np.sum(d) * step - 0.5 * step * (d[0] + d[-1]))


@record(6, "convolution mass conservation")
def criterion_6():
    rng = np.random.default_rng(6)
    lit, wide = [], []
    for _ in range(20):
        lam, t0 = rng.uniform(0.04, 0.12), rng.uniform(30, 120)
        a = rng.uniform(4.0, 12.0)
        k = wm.GammaKernel(a, a / rng.uniform(12.0, 20.0))
        lit.append((_mass(t0, lam, k, t0 + 5 * k.mean), lam))
        # same window plus the slow right tail of the cases peak
        wide.append(_mass(t0, lam, k, t0 + 5 * k.mean + 15.0 / lam))
    worst = min(lit)
    ok = all(0.999 <= m <= 1.001 for m, _ in lit)
    return ok, (f"window t0+5mu: min mass {worst[0]:.5f} at lam={worst[1]:.3f}; "
                f"window t0+5mu+15/lam: min {min(wide):.6f}, max {max(wide):.6f}")


def _coverage(mode, replicates=100):
    truth = two_region_truth()
    layout_truth = None
    hits = None
    kernel_hits = 0
    for r in range(replicates):
        data = two_region_data(truth, np.random.default_rng(1000 + r))
        fit = iterate_fit(perturbed_start(truth), data, mode=mode)
        if layout_truth is None:
            layout_truth = fit.layout.pack(truth, KERNEL)
            hits = np.zeros(len(layout_truth), dtype=int)
        hits += np.abs(fit.B - layout_truth) <= 1.96 * fit.sigmas
        k = unc.kernel_summary(fit)
        kernel_hits += abs(k.mean - KERNEL.mean) <= 2 * k.sigma_mean
    return fit.layout, hits, kernel_hits


@record(7, "synthetic round-trip coverage")
def criterion_7():
    t = time.time()
    layout, hits, kernel_hits = _coverage("exact")
    elapsed = time.time() - t
    lo, hi = int(hits.min()), int(hits.max())
    ok = lo >= 90 and hi <= 99 and elapsed < 300
    _, hits_p, _ = _coverage("paper")
    lo_p = int(hits_p.min())
    return ok, (f"exact mode: coverage {lo}..{hi} of 100 over {len(layout)} parameters "
                f"(lowest {layout.label(int(hits.argmin()))}), mean delay within 2 sigma in {kernel_hits}/100, "
                f"{elapsed:.0f} s; paper mode lowest {lo_p} ({layout.label(int(hits_p.argmin()))})")


def _toy_fit(values, cov):
    lay = Layout([RegionSpec("X", 2)], fit_kernel=False)
    B = np.zeros(len(lay))
    V = np.eye(len(lay))
    idx = [lay.index("X", "Nd", 0), lay.index("X", "Nc", 0), lay.index("X", "Nd", 1), lay.index("X", "Nc", 1)]
    B[idx] = values
    V[np.ix_(idx, idx)] = cov
    for i in range(2):
        B[lay.index("X", "lam", i)] = 0.1
        B[lay.index("X", "t0", i)] = 40.0 * (i + 1)
    return FitResult(lay, B, V, 0.0, 1, 1.0, 1, True, [], [], KERNEL, 0.25, "exact", 20)


@record(8, "GLS combination oracle")
def criterion_8():
    vals = [6.8e3, 1.19e7, 2.8e3, 6.26e6]
    f = _toy_fit(vals, np.diag([1.7e3**2, 1.2e6**2, 1.6e3**2, 0.78e6**2]))
    est = [unc.cfr_single(f, "X", i) for i in range(2)]
    comb = unc.cfr_combine(est, f)
    w = np.array([e.sigma**-2 for e in est])
    ivw = float(w @ [e.value for e in est] / w.sum())
    diag_err = max(abs(comb.value - ivw), abs(comb.sigma - w.sum() ** -0.5))
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(200):
        s = np.array([1.7e3, 1.2e6, 1.6e3, 0.78e6]) * rng.uniform(0.5, 1.5, 4)
        A = rng.normal(size=(4, 4))
        C = A @ A.T + 0.5 * np.eye(4)
        d = np.sqrt(np.diag(C))
        cov = C / np.outer(d, d) * np.outer(s, s)
        f = _toy_fit(vals, cov)
        est = [unc.cfr_single(f, "X", i) for i in range(2)]
        comb = unc.cfr_combine(est, f)
        D = np.array([[1 / vals[1], -vals[0] / vals[1] ** 2, 0, 0], [0, 0, 1 / vals[3], -vals[2] / vals[3] ** 2]])
        Ci = np.linalg.inv(D @ cov @ D.T)
        y = np.array([e.value for e in est])

        def q(mu):
            return (y - mu) @ Ci @ (y - mu)

        # the GLS objective is an exact parabola in mu
        c = y.mean()
        vertex = c + (q(c - 1e-3) - q(c + 1e-3)) / (2 * (q(c - 1e-3) - 2 * q(c) + q(c + 1e-3))) * 1e-3
        worst = max(worst, abs(comb.value - vertex))
    ok = diag_err < 1e-12 and worst < 1e-8
    return ok, f"diagonal: |diff| {diag_err:.1e} (< 1e-12); 200 random covariances: max |diff| {worst:.1e} (< 1e-8)"


@record(9, "quadrature stability")
def criterion_9():
    truth = two_region_truth()
    data = two_region_data(truth, np.random.default_rng(9))
    a = iterate_fit(perturbed_start(truth), data, step=0.25)
    b = iterate_fit(perturbed_start(truth), data, step=0.125)
    shift = np.abs(a.B - b.B) / a.sigmas
    j = int(shift.argmax())
    return bool(shift.max() < 0.01), f"max |change| = {shift[j]:.2e} sigma at {a.layout.label(j)} (< 0.01)"


def _cli_run(workdir, out):
    cfg = workdir / "run.yaml"
    for stage in ("ingest", "seed", "fit"):
        with contextlib.redirect_stdout(io.StringIO()):
            code = cli.main([stage, "--config", str(cfg), "--out", str(out)])
        if code:
            raise RuntimeError(f"stage {stage} exited {code}")


@record(10, "determinism of seed and fit")
def criterion_10():
    import yaml

    start, cutoff = dt.date(2021, 11, 30), dt.date(2022, 4, 18)
    truth = two_region_truth()
    with tempfile.TemporaryDirectory() as tmp:
        w = Path(tmp)
        rows = syn.consistent_daily(truth, {m.region: start for m in truth}, cutoff, np.random.default_rng(10))
        (w / "daily.csv").write_text(syn.daily_csv(rows, columns=("date", "region", "new_cases", "new_deaths")))
        regions = {}
        for m in truth:
            n = len(m.case_peaks)
            box = {"C": [0.0, 4e4], "S": [-300.0, 0.0]}
            for i, p in enumerate(m.case_peaks, start=1):
                box.update({f"N{i}": [0.7 * p.N, 1.3 * p.N], f"lam{i}": [0.8 * p.lam, 1.2 * p.lam],
                            f"t0{i}": [p.t0 - 6, p.t0 + 6]})
            regions[m.region] = {"start": start.isoformat(), "cutoff": cutoff.isoformat(), "peaks": n, "box": box}
        cfg = {"data": {"path": "daily.csv"}, "regions": regions, "seed": {"trials": 50000, "rng_seed": 3},
               "fit": {"alpha": 6.0, "beta": 0.4}}
        (w / "run.yaml").write_text(yaml.safe_dump(cfg))
        _cli_run(w, w / "a")
        _cli_run(w, w / "b")
        names = ["seed.json", "seed_table.txt", "fit.json", "report.txt", "report.json"]
        names += sorted(str(p.relative_to(w / "a")) for p in (w / "a" / "bands").iterdir())
        same = [n for n in names if (w / "a" / n).read_bytes() == (w / "b" / n).read_bytes()]
    return len(same) == len(names), f"{len(same)}/{len(names)} output files byte-identical"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9, criterion_10]


def line(number):
    title, ok, detail = RESULTS[number]
    return f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}"


@pytest.mark.parametrize("check", CRITERIA, ids=[f"{c.number:02d}_{c.title.replace(' ', '_')}" for c in CRITERIA])
def test_acceptance(check):
    ok, detail = check()
    print(line(check.number))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for check in CRITERIA:
        check()
        print(line(check.number), flush=True)
        failed += not RESULTS[check.number][1]
    sys.exit(1 if failed else 0)
