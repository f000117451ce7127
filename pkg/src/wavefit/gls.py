"""
Global linearized fit of cases and deaths over several regions.

Every iteration linearizes the Gompertz timing ``(t0, lam)`` of each peak and
the shared kernel ``(alpha, beta)`` around their current values. All
normalizations, backgrounds and the timing/kernel corrections are then solved
together as one generalized least squares problem, and the corrections are
folded back in until they vanish.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import model as wm
from .stats import chi2_prob

log = logging.getLogger(__name__)

LINEAR_ROLES = ("Nc", "Cc", "Sc", "Nd", "Cd", "Sd")
NONLINEAR_ROLES = ("t0", "lam", "alpha", "beta")
SHARED = "*"
#: paper defaults for the kernel start values
KERNEL_INIT = wm.GammaKernel(4.938, 0.277)
MAX_CONDITION = 1e12


class FitError(RuntimeError):
    """Numerical failure of the global fit."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class SingularDesignError(FitError, np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class RegionSpec:
    """Structure of one region: number of case peaks and which of them carry deaths."""

    region: str
    n_peaks: int
    death_peaks: tuple = None

    def __post_init__(self):
        if self.n_peaks < 1:
            raise ValueError(f"{self.region}: n_peaks must be >= 1")
        dp = tuple(range(self.n_peaks)) if self.death_peaks is None else tuple(sorted(self.death_peaks))
        if any(not 0 <= i < self.n_peaks for i in dp):
            raise ValueError(f"{self.region}: death peak index out of range")
        object.__setattr__(self, "death_peaks", dp)


class Layout:
    """
    Ordering manifest of the parameter vector.

    Per region, in order: ``Nc`` per peak, ``Cc``, ``Sc``, ``Nd`` per retained
    deaths peak, ``Cd``, ``Sd``, then ``t0`` and ``lam`` per peak. The shared
    kernel ``alpha``, ``beta`` come last unless the kernel is fixed.
    Each entry is a ``(region, role, peak)`` triple, ``peak`` being ``None``
    for backgrounds and kernel.
    """

    def __init__(self, specs, fit_kernel=True):
        self.specs = tuple(specs)
        names = [s.region for s in self.specs]
        if len(set(names)) != len(names):
            raise ValueError("duplicate region names")
        self.fit_kernel = bool(fit_kernel)
        entries = []
        for s in self.specs:
            r = s.region
            entries += [(r, "Nc", i) for i in range(s.n_peaks)]
            entries += [(r, "Cc", None), (r, "Sc", None)]
            entries += [(r, "Nd", i) for i in s.death_peaks]
            entries += [(r, "Cd", None), (r, "Sd", None)]
            for i in range(s.n_peaks):
                entries += [(r, "t0", i), (r, "lam", i)]
        if self.fit_kernel:
            entries += [(SHARED, "alpha", None), (SHARED, "beta", None)]
        self.entries = tuple(entries)
        self._index = {e: j for j, e in enumerate(self.entries)}

    def __len__(self):
        return len(self.entries)

    def index(self, region, role, peak=None):
        try:
            return self._index[(region, role, peak)]
        except KeyError:
            raise KeyError(f"no parameter {(region, role, peak)}") from None

    def label(self, j):
        r, role, peak = self.entries[j]
        return f"{r}.{role}" + ("" if peak is None else str(peak + 1))

    @property
    def nonlinear(self):
        return np.array([j for j, e in enumerate(self.entries) if e[1] in NONLINEAR_ROLES], dtype=int)

    def pack(self, models, kernel=None):
        """Parameter vector holding the current values of every entry."""
        by_name = {m.region: m for m in models}
        kernel = kernel if kernel is not None else models[0].kernel
        out = np.empty(len(self))
        for j, (r, role, peak) in enumerate(self.entries):
            if r == SHARED:
                out[j] = getattr(kernel, role)
                continue
            m = by_name[r]
            if role == "Nc":
                out[j] = m.case_peaks[peak].N
            elif role == "t0":
                out[j] = m.case_peaks[peak].t0
            elif role == "lam":
                out[j] = m.case_peaks[peak].lam
            elif role == "Nd":
                out[j] = m.death_norms[m.death_peaks.index(peak)]
            elif role == "Cc":
                out[j] = m.bg_cases.C
            elif role == "Sc":
                out[j] = m.bg_cases.S
            elif role == "Cd":
                out[j] = m.bg_deaths.C
            elif role == "Sd":
                out[j] = m.bg_deaths.S
        return out

    def unpack(self, vec, kernel=None):
        """Region models from a parameter vector; ``kernel`` is required when it is not fitted."""
        vec = np.asarray(vec, dtype=float)
        if self.fit_kernel:
            kernel = wm.GammaKernel(vec[self.index(SHARED, "alpha")], vec[self.index(SHARED, "beta")])
        elif kernel is None:
            raise ValueError("a fixed kernel must be supplied")
        models = []
        for s in self.specs:
            r = s.region
            peaks = [
                wm.GompertzPeak(vec[self.index(r, "Nc", i)], vec[self.index(r, "lam", i)], vec[self.index(r, "t0", i)])
                for i in range(s.n_peaks)
            ]
            models.append(
                wm.RegionModel(
                    r,
                    peaks,
                    [vec[self.index(r, "Nd", i)] for i in s.death_peaks],
                    wm.LinearBackground(vec[self.index(r, "Cc")], vec[self.index(r, "Sc")]),
                    wm.LinearBackground(vec[self.index(r, "Cd")], vec[self.index(r, "Sd")]),
                    kernel,
                    death_peaks=s.death_peaks,
                )
            )
        return models, kernel

    def to_list(self):
        return [[r, role, peak] for r, role, peak in self.entries]

    def describe(self):
        return {
            "regions": [
                {"region": s.region, "n_peaks": s.n_peaks, "death_peaks": list(s.death_peaks)} for s in self.specs
            ],
            "fit_kernel": self.fit_kernel,
        }

    @classmethod
    def from_description(cls, d):
        specs = [RegionSpec(x["region"], x["n_peaks"], tuple(x["death_peaks"])) for x in d["regions"]]
        return cls(specs, d["fit_kernel"])


def gradient_rows(layout, mdl, t, metric, step=wm.DEFAULT_STEP, mode="paper"):
    """
    Derivatives of one region's cases or deaths curve at ``t`` with respect to
    every entry of ``layout``; timing and kernel columns are scaled by the
    current normalizations.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    rows = np.zeros((t.size, len(layout)))
    r = mdl.region
    if metric == "cases":
        for i, p in enumerate(mdl.case_peaks):
            f = wm.gompertz_rate(t, p.t0, p.lam)
            d_t0, d_lam = wm.partials_cases(t, p.t0, p.lam)
            rows[:, layout.index(r, "Nc", i)] = f
            rows[:, layout.index(r, "t0", i)] += p.N * d_t0
            rows[:, layout.index(r, "lam", i)] += p.N * d_lam
        rows[:, layout.index(r, "Cc")] = 1.0
        rows[:, layout.index(r, "Sc")] = t
    elif metric == "deaths":
        for i, nd in zip(mdl.death_peaks, mdl.death_norms):
            p = mdl.case_peaks[i]
            shape, d_t0, d_lam, d_a, d_b = wm.death_shape_and_partials(t, p.t0, p.lam, mdl.kernel, step, mode=mode)
            rows[:, layout.index(r, "Nd", i)] = shape
            rows[:, layout.index(r, "t0", i)] += nd * d_t0
            rows[:, layout.index(r, "lam", i)] += nd * d_lam
            if layout.fit_kernel:
                rows[:, layout.index(SHARED, "alpha")] += nd * d_a
                rows[:, layout.index(SHARED, "beta")] += nd * d_b
        rows[:, layout.index(r, "Cd")] = 1.0
        rows[:, layout.index(r, "Sd")] = t
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return rows


def build_design(layout, models, data, step=wm.DEFAULT_STEP, mode="paper"):
    """
    Stack the linearized system over all regions, cases rows before deaths rows.

    Parameters
    ----------
    layout : Layout
    models : list of RegionModel
        Current parameter values, in the layout's region order.
    data : list of (WeeklySeries, WeeklySeries)
        ``(cases, deaths)`` per region, same order.

    Returns
    -------
    X : ndarray (n_rows, n_params)
    Y : ndarray (n_rows,)
    V : ndarray (n_rows,)
        Diagonal of the data variance matrix.
    """
    if len(models) != len(layout.specs) or len(data) != len(layout.specs):
        raise ValueError("models, data and layout disagree on the number of regions")
    blocks, ys, vs = [], [], []
    for spec, mdl, (cases, deaths) in zip(layout.specs, models, data):
        if mdl.region != spec.region:
            raise ValueError(f"region order mismatch: {mdl.region} vs {spec.region}")
        if len(mdl.case_peaks) != spec.n_peaks or tuple(mdl.death_peaks) != spec.death_peaks:
            raise ValueError(f"{spec.region}: model structure does not match the layout")
        for series, metric in ((cases, "cases"), (deaths, "deaths")):
            blocks.append(gradient_rows(layout, mdl, series.t, metric, step, mode))
            ys.append(series.y)
            vs.append(series.sigma**2)
    return np.vstack(blocks), np.concatenate(ys), np.concatenate(vs)


def solve_gls(X, Y, V, names=None):
    """
    Generalized least squares for a diagonal data covariance.

    The whitened, column-equilibrated design is factorized by QR; conditioning
    is judged on that scaled matrix so unit choices do not matter.

    Parameters
    ----------
    X : ndarray (n, p)
    Y : ndarray (n,)
    V : ndarray (n,) or (n, n)
        Data variances (the diagonal is used when a matrix is passed).
    names : list of str, optional
        Column labels for error messages.

    Returns
    -------
    B : ndarray (p,)
    Vb : ndarray (p, p)
        ``(X^T V^-1 X)^-1``
    chi2 : float
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    V = np.asarray(V, dtype=float)
    if V.ndim == 2:
        if np.any(V - np.diag(np.diag(V))):
            raise ValueError("V must be diagonal")
        V = np.diag(V)
    if np.any(~(V > 0)):
        raise ValueError("variances must be strictly positive")
    n, p = X.shape
    w = 1.0 / np.sqrt(V)
    A = X * w[:, None]
    b = Y * w
    norms = np.linalg.norm(A, axis=0)
    label = (lambda j: names[j]) if names is not None else (lambda j: f"column {j}")
    if np.any(norms == 0):
        j = int(np.flatnonzero(norms == 0)[0])
        raise SingularDesignError(f"design column {label(j)} is identically zero")
    As = A / norms
    Q, R = np.linalg.qr(As)
    sv = linalg.svdvals(R)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if cond > MAX_CONDITION:
        G = As.T @ As
        np.fill_diagonal(G, 0.0)
        i, j = np.unravel_index(np.argmax(np.abs(G)), G.shape)
        raise SingularDesignError(
            f"normal matrix is ill-conditioned (condition {cond:.3g}); "
            f"most collinear columns: {label(min(i, j))} and {label(max(i, j))} "
            f"(cosine {G[i, j]:+.12f})"
        )
    z = linalg.solve_triangular(R, Q.T @ b)
    Rinv = linalg.solve_triangular(R, np.eye(p))
    B = z / norms
    Vb = (Rinv @ Rinv.T) / np.outer(norms, norms)
    Vb = 0.5 * (Vb + Vb.T)
    resid = b - As @ z
    return B, Vb, float(resid @ resid)


def chi2_of(models, data, step=wm.DEFAULT_STEP):
    """Nonlinear chi-square of the full model against all series."""
    total = 0.0
    for mdl, (cases, deaths) in zip(models, data):
        total += np.sum(((wm.cases_curve(mdl, cases.t) - cases.y) / cases.sigma) ** 2)
        total += np.sum(((wm.deaths_curve(mdl, deaths.t, step) - deaths.y) / deaths.sigma) ** 2)
    return float(total)


@dataclass
class FitResult:
    """Converged global fit; ``B`` holds parameter values (corrections already folded in)."""

    layout: Layout
    B: np.ndarray
    Vb: np.ndarray
    chi2: float
    ndf: int
    prob: float
    iterations: int
    converged: bool
    delta_norm_trace: list
    chi2_trace: list
    kernel: wm.GammaKernel
    step: float
    derivative_mode: str
    n_data: int
    models: list = field(default=None)

    def __post_init__(self):
        if self.models is None:
            self.models, _ = self.layout.unpack(self.B, self.kernel)

    def index(self, region, role, peak=None):
        return self.layout.index(region, role, peak)

    def value(self, region, role, peak=None):
        return float(self.B[self.index(region, role, peak)])

    def sigma(self, region, role, peak=None):
        j = self.index(region, role, peak)
        return float(np.sqrt(max(self.Vb[j, j], 0.0)))

    @property
    def sigmas(self):
        return np.sqrt(np.clip(np.diag(self.Vb), 0.0, None))

    def model(self, region):
        for m in self.models:
            if m.region == region:
                return m
        raise KeyError(region)

    def to_dict(self):
        return {
            "layout": self.layout.describe(),
            "manifest": self.layout.to_list(),
            "B": [float(x) for x in self.B],
            "Vb": [[float(x) for x in row] for row in self.Vb],
            "chi2": self.chi2,
            "ndf": self.ndf,
            "prob": self.prob,
            "iterations": self.iterations,
            "converged": self.converged,
            "delta_norm_trace": [float(x) for x in self.delta_norm_trace],
            "chi2_trace": [float(x) for x in self.chi2_trace],
            "kernel": {"alpha": self.kernel.alpha, "beta": self.kernel.beta},
            "step": self.step,
            "derivative_mode": self.derivative_mode,
            "n_data": self.n_data,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            layout=Layout.from_description(d["layout"]),
            B=np.array(d["B"], dtype=float),
            Vb=np.array(d["Vb"], dtype=float),
            chi2=d["chi2"],
            ndf=d["ndf"],
            prob=d["prob"],
            iterations=d["iterations"],
            converged=d["converged"],
            delta_norm_trace=list(d["delta_norm_trace"]),
            chi2_trace=list(d["chi2_trace"]),
            kernel=wm.GammaKernel(d["kernel"]["alpha"], d["kernel"]["beta"]),
            step=d["step"],
            derivative_mode=d["derivative_mode"],
            n_data=d["n_data"],
        )


def _solve_linear_only(layout, models, data, step, mode):
    """Re-solve normalizations and backgrounds with all nonlinear parameters frozen."""
    X, Y, V = build_design(layout, models, data, step, mode)
    lin = np.array([j for j, e in enumerate(layout.entries) if e[1] in LINEAR_ROLES], dtype=int)
    names = [layout.label(j) for j in lin]
    B, _, _ = solve_gls(X[:, lin], Y, V, names)
    vec = layout.pack(models)
    vec[lin] = B
    return vec


def iterate_fit(
    models,
    data,
    kernel_init=KERNEL_INIT,
    tol=1e-8,
    max_iter=100,
    step=wm.DEFAULT_STEP,
    mode="paper",
    fixed_kernel=False,
    death_peaks=None,
):
    """
    Iterated linearized GLS fit of all regions at once.

    Parameters
    ----------
    models : list of RegionModel
        Start values. Only the case peak timing and the structure are needed;
        normalizations and backgrounds are re-solved before the first
        linearization.
    data : list of (WeeklySeries, WeeklySeries)
    kernel_init : GammaKernel
        Start kernel, or the fixed kernel when ``fixed_kernel`` is set.
    tol : float
        Convergence threshold on ``max |delta| / max(|value|, 1e-12)`` over the
        timing and kernel corrections.
    mode : {"paper", "exact"}
        Form of the ``alpha`` derivative inside the convolution.
    death_peaks : dict, optional
        ``{region: retained peak indices}``, overriding the models' structure.

    Returns
    -------
    FitResult
    """
    death_peaks = death_peaks or {}
    specs = []
    for m in models:
        if m.region in death_peaks:
            keep = tuple(death_peaks[m.region])
        else:
            keep = m.death_peaks if m.death_norms else tuple(range(len(m.case_peaks)))
        specs.append(RegionSpec(m.region, len(m.case_peaks), keep))
    layout = Layout(specs, fit_kernel=not fixed_kernel)
    start = []
    for s, m in zip(specs, models):
        norms = dict(zip(m.death_peaks, m.death_norms))
        start.append(
            wm.RegionModel(
                m.region, m.case_peaks, [norms.get(i, 0.0) for i in s.death_peaks],
                m.bg_cases, m.bg_deaths, kernel_init, death_peaks=s.death_peaks,
            )
        )
    vec = _solve_linear_only(layout, start, data, step, mode)
    current, kernel = layout.unpack(vec, kernel_init)
    nl = layout.nonlinear
    positive = np.array([layout.entries[j][1] in ("lam", "alpha", "beta") for j in nl])
    names = [layout.label(j) for j in range(len(layout))]
    n_data = sum(len(c) + len(d) for c, d in data)

    chi2_now = chi2_of(current, data, step)
    chi2_trace = [chi2_now]
    delta_trace = []
    rises = 0
    converged = False
    Vb = None
    it = 0
    for it in range(1, max_iter + 1):
        X, Y, V = build_design(layout, current, data, step, mode)
        B, Vb, _ = solve_gls(X, Y, V, names)
        old = layout.pack(current, kernel)
        delta = B[nl]
        rel = np.max(np.abs(delta) / np.maximum(np.abs(old[nl]), 1e-12)) if nl.size else 0.0
        new = B.copy()
        factor = 1.0
        for _ in range(21):
            new[nl] = old[nl] + factor * delta
            if np.all(new[nl][positive] > 0):
                break
            factor *= 0.5
        else:
            raise FitError("growth rate or kernel parameter driven non-positive", chi2_trace)
        if factor < 1.0:
            log.warning("iteration %d: correction halved %d times to keep rates positive", it, int(-np.log2(factor)))
        current, kernel = layout.unpack(new, kernel)
        chi2_new = chi2_of(current, data, step)
        delta_trace.append(float(rel))
        chi2_trace.append(chi2_new)
        log.debug("iteration %d: chi2 %.6g, max relative correction %.3g", it, chi2_new, rel)
        rises = rises + 1 if chi2_new > chi2_now else 0
        chi2_now = chi2_new
        if rises >= 5:
            raise FitError(f"fit diverging: chi2 rose for 5 consecutive iterations (now {chi2_new:.6g})", chi2_trace)
        if rel < tol:
            converged = True
            break
    if not converged:
        log.warning("fit did not converge in %d iterations (last correction %.3g)", max_iter, delta_trace[-1])
    vec = layout.pack(current, kernel)
    ndf = n_data - len(layout)
    return FitResult(
        layout=layout,
        B=vec,
        Vb=Vb,
        chi2=chi2_now,
        ndf=ndf,
        prob=chi2_prob(chi2_now, ndf) if ndf >= 1 else float("nan"),
        iterations=it,
        converged=converged,
        delta_norm_trace=delta_trace,
        chi2_trace=chi2_trace,
        kernel=kernel,
        step=step,
        derivative_mode=mode,
        n_data=n_data,
        models=current,
    )


def multi_start_fit(starts, data, **kwargs):
    """Run :func:`iterate_fit` from several start points and keep the lowest chi-square."""
    best = None
    for models in starts:
        try:
            res = iterate_fit(models, data, **kwargs)
        except FitError as exc:
            log.info("start discarded: %s", exc)
            continue
        if best is None or (res.converged, -res.chi2) > (best.converged, -best.chi2):
            best = res
    if best is None:
        raise FitError("every start point failed")
    return best
