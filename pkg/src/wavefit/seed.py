"""
Per-region Monte Carlo start values.

Before the global fit, the cases series of each region is fitted alone by
drawing parameter combinations uniformly inside a box and keeping the one
with the lowest chi-square. Trials are drawn in fixed-size chunks, each from
its own counter-based stream keyed by ``(rng_seed, chunk index)``, so the
result does not depend on how many workers evaluate the chunks.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model as wm
from .stats import chi2_prob

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy-philox4x64"
CHUNK = 65536


def param_names(n_peaks):
    names = []
    for i in range(1, n_peaks + 1):
        names += [f"N{i}", f"lam{i}", f"t0{i}"]
    return names + ["C", "S"]


@dataclass(frozen=True)
class SearchBox:
    """Uniform search bounds ``{name: (low, high)}`` for one region's cases curve."""

    bounds: dict
    trials: int = 1_000_000
    rng_seed: int = 0

    def __post_init__(self):
        b = {k: (float(lo), float(hi)) for k, (lo, hi) in self.bounds.items()}
        n_peaks = sum(1 for k in b if k.startswith("N"))
        if set(b) != set(param_names(n_peaks)):
            raise ValueError(f"box must define exactly {param_names(n_peaks)}, got {sorted(b)}")
        for k, (lo, hi) in b.items():
            if not lo <= hi:
                raise ValueError(f"box for {k}: low {lo} > high {hi}")
            if k.startswith("lam") and lo <= 0:
                raise ValueError(f"box for {k} must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        object.__setattr__(self, "bounds", b)

    @property
    def n_peaks(self):
        return sum(1 for k in self.bounds if k.startswith("N"))

    @property
    def names(self):
        return param_names(self.n_peaks)

    def lows_highs(self):
        lo = np.array([self.bounds[k][0] for k in self.names])
        hi = np.array([self.bounds[k][1] for k in self.names])
        return lo, hi


@dataclass
class SeedResult:
    region: str
    params: dict
    chi2: float
    ndf: int
    prob: float
    trials: int
    rng_seed: int
    rng_algorithm: str = RNG_ALGORITHM
    warning: str = None
    extra: dict = field(default_factory=dict)

    def peaks(self):
        n = sum(1 for k in self.params if k.startswith("N"))
        return [
            wm.GompertzPeak(self.params[f"N{i}"], self.params[f"lam{i}"], self.params[f"t0{i}"])
            for i in range(1, n + 1)
        ]

    def to_dict(self):
        d = {
            "region": self.region,
            "params": {k: float(v) for k, v in self.params.items()},
            "chi2": float(self.chi2),
            "ndf": int(self.ndf),
            "prob": float(self.prob),
            "trials": int(self.trials),
            "rng_seed": int(self.rng_seed),
            "rng_algorithm": self.rng_algorithm,
        }
        if self.warning:
            d["warning"] = self.warning
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["region"], dict(d["params"]), d["chi2"], d["ndf"], d["prob"], d["trials"],
            d["rng_seed"], d.get("rng_algorithm", RNG_ALGORITHM), d.get("warning"),
        )


def _curves(P, t, n_peaks):
    """Cases curves for a batch of parameter rows ``P`` (m, 3 n_peaks + 2) at ``t``."""
    t = np.asarray(t, dtype=float)[None, :]
    out = P[:, -2:-1] + P[:, -1:] * t
    for i in range(n_peaks):
        N, lam, t0 = P[:, 3 * i : 3 * i + 1], P[:, 3 * i + 1 : 3 * i + 2], P[:, 3 * i + 2 : 3 * i + 3]
        x = -lam * (t - t0)
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            u = np.exp(np.minimum(x, 700.0))
            e = x - u
            f = np.where(e < wm.EXP_FLOOR, 0.0, lam * np.exp(np.maximum(e, wm.EXP_FLOOR)))
        out = out + N * f
    return out


def _chi2_batch(P, series, n_peaks):
    with np.errstate(over="ignore", invalid="ignore"):
        r = (_curves(P, series.t, n_peaks) - series.y[None, :]) / series.sigma[None, :]
        c = np.sum(r * r, axis=1)
    return np.where(np.isfinite(c), c, np.inf)


def chi2_cases(params, series):
    """Chi-square of the cases curve ``params`` (name -> value) against a weekly series."""
    n_peaks = sum(1 for k in params if k.startswith("N"))
    row = np.array([[params[k] for k in param_names(n_peaks)]], dtype=float)
    return float(_chi2_batch(row, series, n_peaks)[0])


def _chunk_best(box, series, k, n):
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(box.rng_seed, spawn_key=(k,))))
    lo, hi = box.lows_highs()
    P = lo + gen.random((n, lo.size)) * (hi - lo)
    c = _chi2_batch(P, series, box.n_peaks)
    j = int(np.argmin(c))
    return float(c[j]), k * CHUNK + j, P[j]


def _polish(x, box, series, evaluations=300):
    """Coordinate descent inside the box; returns the improved point and its chi-square."""
    lo, hi = box.lows_highs()
    steps = 0.05 * (hi - lo)
    best = _chi2_batch(x[None, :], series, box.n_peaks)[0]
    used = 0
    while used < evaluations and np.any(steps > 1e-12 * (np.abs(x) + 1)):
        improved = False
        for j in range(x.size):
            if steps[j] == 0:
                continue
            trial = np.repeat(x[None, :], 2, axis=0)
            trial[0, j] = min(x[j] + steps[j], hi[j])
            trial[1, j] = max(x[j] - steps[j], lo[j])
            c = _chi2_batch(trial, series, box.n_peaks)
            used += 2
            k = int(np.argmin(c))
            if c[k] < best:
                best, x = c[k], trial[k]
                improved = True
        if not improved:
            steps = steps * 0.5
    return x, float(best)


def mc_search(box, series, workers=1, polish=False):
    """
    Uniform random search over ``box`` minimizing the cases chi-square.

    Parameters
    ----------
    box : SearchBox
    series : WeeklySeries
    workers : int
        Threads evaluating chunks; the result is identical for any value.
    polish : bool
        Follow the search with a short coordinate descent.

    Returns
    -------
    SeedResult
    """
    n_chunks = -(-box.trials // CHUNK)
    sizes = [min(CHUNK, box.trials - k * CHUNK) for k in range(n_chunks)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda k: _chunk_best(box, series, k, sizes[k]), range(n_chunks)))
    else:
        results = [_chunk_best(box, series, k, sizes[k]) for k in range(n_chunks)]
    chi2, _, x = min(results, key=lambda r: (r[0], r[1]))
    warning = None
    if not np.isfinite(chi2):
        warning = "no trial produced a finite chi-square"
        log.warning("%s: %s", series.region, warning)
    elif polish:
        x, chi2 = _polish(np.array(x), box, series)
    n_par = len(box.names)
    ndf = len(series) - n_par
    prob = chi2_prob(chi2, ndf) if ndf >= 1 and np.isfinite(chi2) else float("nan")
    return SeedResult(
        series.region,
        {k: float(v) for k, v in zip(box.names, x)},
        chi2,
        ndf,
        prob,
        box.trials,
        box.rng_seed,
        warning=warning,
    )


def default_box(series, n_peaks=1, trials=1_000_000, rng_seed=0):
    """
    Generous search box from the data alone.

    ``t0`` windows split the data span into ``n_peaks`` non-overlapping
    pieces (breaking the label symmetry between peaks); ``N`` spans 0.1 to 10
    times the observed area above the minimum.
    """
    y = series.y
    t_lo, t_hi = series.t[0] - 3.0, series.t[-1] + 3.0
    area = max(np.sum(y - y.min()) * 7.0, 1.0)
    ymax = max(float(y.max()), 1.0)
    edges = np.linspace(t_lo, t_hi, n_peaks + 1)
    bounds = {}
    for i in range(n_peaks):
        bounds[f"N{i + 1}"] = (0.1 * area, 10.0 * area)
        bounds[f"lam{i + 1}"] = (0.02, 0.3)
        bounds[f"t0{i + 1}"] = (edges[i], edges[i + 1])
    bounds["C"] = (0.0, ymax)
    bounds["S"] = (-0.02 * ymax, 0.02 * ymax)
    return SearchBox(bounds, trials, rng_seed)
