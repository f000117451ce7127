"""
Forward model for epidemic waves.

Cases are a sum of normalized Gompertz-derivative peaks on top of a linear
background. Deaths reuse the timing of each case peak, convolved with a gamma
delay kernel shared by every region, plus their own linear background.

All times are day indices on the region's axis (day 0 is the first day of the
first cases week).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

#: exponent arguments below this short-circuit to exactly zero
EXP_FLOOR = -700.0
#: default trapezoid step for the delay convolution [day]
DEFAULT_STEP = 0.25
#: the convolution starts this many days before day 0
LOWER_PAD = 60.0

DERIVATIVE_MODES = ("paper", "exact")


@dataclass(frozen=True)
class GompertzPeak:
    """One wave: asymptotic total ``N``, growth rate ``lam`` [1/day], inflection day ``t0``."""

    N: float
    lam: float
    t0: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"growth rate must be positive, got {self.lam}")
        if not np.isfinite(self.t0):
            raise ValueError("t0 must be finite")

    @property
    def height(self):
        """Analytic maximum of ``N * f_c``, reached at ``t0``."""
        return self.N * self.lam / np.e


@dataclass(frozen=True)
class LinearBackground:
    C: float = 0.0
    S: float = 0.0

    def __call__(self, t):
        return self.C + self.S * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class GammaKernel:
    """Case-to-death delay density with shape ``alpha`` and rate ``beta`` [1/day]."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"gamma kernel needs alpha, beta > 0, got {self.alpha}, {self.beta}")

    @property
    def mean(self):
        return self.alpha / self.beta

    @property
    def cv(self):
        return 1.0 / np.sqrt(self.alpha)

    @classmethod
    def from_mean_cv(cls, mean, cv):
        alpha = 1.0 / cv**2
        return cls(alpha, alpha / mean)


@dataclass(frozen=True)
class RegionModel:
    """
    Composition of one region's cases and deaths curves.

    ``death_norms[k]`` is the deaths normalization attached to case peak
    ``death_peaks[k]``; by default the first ``len(death_norms)`` case peaks
    carry deaths. A case peak without a deaths normalization contributes no
    deaths at all.
    """

    region: str
    case_peaks: tuple
    death_norms: tuple
    bg_cases: LinearBackground
    bg_deaths: LinearBackground
    kernel: GammaKernel
    death_peaks: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "case_peaks", tuple(self.case_peaks))
        object.__setattr__(self, "death_norms", tuple(float(x) for x in self.death_norms))
        if not self.case_peaks:
            raise ValueError(f"{self.region}: at least one case peak is required")
        if self.death_peaks is None:
            object.__setattr__(self, "death_peaks", tuple(range(len(self.death_norms))))
        else:
            object.__setattr__(self, "death_peaks", tuple(int(i) for i in self.death_peaks))
        if len(self.death_peaks) != len(self.death_norms):
            raise ValueError(f"{self.region}: death_peaks and death_norms differ in length")
        if len(self.death_norms) > len(self.case_peaks):
            raise ValueError(f"{self.region}: more deaths normalizations than case peaks")
        if len(set(self.death_peaks)) != len(self.death_peaks) or any(
            not 0 <= i < len(self.case_peaks) for i in self.death_peaks
        ):
            raise ValueError(f"{self.region}: invalid death peak indices {self.death_peaks}")

    def with_kernel(self, kernel):
        return replace(self, kernel=kernel)


def _exp(x):
    """``exp`` with arguments below ``EXP_FLOOR`` mapped to exactly 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        return np.where(x < EXP_FLOOR, 0.0, np.exp(np.maximum(x, EXP_FLOOR)))


def _gompertz_parts(t, t0, lam):
    """Return ``(f, u)`` with ``u = exp(-lam (t - t0))`` and ``f = lam * u * exp(-u)``."""
    x = -lam * (np.asarray(t, dtype=float) - t0)
    # beyond x = 700 the double exponential is zero anyway
    u = _exp(np.minimum(x, 700.0))
    f = lam * _exp(x - u)
    return f, u


def gompertz_rate(t, t0, lam):
    """Normalized Gompertz derivative ``lam * exp(-exp(-lam (t-t0))) * exp(-lam (t-t0))``."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    f, _ = _gompertz_parts(t, t0, lam)
    return f


def partials_cases(t, t0, lam):
    """
    Coefficients of ``delta t0`` and ``delta lam`` in the first order expansion
    of the normalized Gompertz derivative.

    Returns
    -------
    d_t0, d_lam : ndarray
        ``f * lam * h`` and ``f * (1/lam - (t - t0) h)`` with ``h = 1 - exp(-lam (t - t0))``.
    """
    t = np.asarray(t, dtype=float)
    f, u = _gompertz_parts(t, t0, lam)
    h = 1.0 - u
    nz = f > 0
    d_t0 = np.where(nz, f * lam * np.where(nz, h, 0.0), 0.0)
    d_lam = np.where(nz, f * (1.0 / lam - (t - t0) * np.where(nz, h, 0.0)), 0.0)
    return d_t0, d_lam


def gamma_pdf(t, alpha, beta):
    """Gamma density with shape ``alpha`` and rate ``beta``; raises for negative ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("gamma_pdf is defined for t >= 0 only")
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        logg = alpha * np.log(beta) + (alpha - 1.0) * np.log(t) - beta * t - special.gammaln(alpha)
    out = _exp(np.nan_to_num(logg, nan=-np.inf, neginf=-np.inf, posinf=np.inf))
    if alpha == 1.0:
        out = np.where(t == 0, beta, out)
    elif alpha < 1.0:
        out = np.where(t == 0, np.inf, out)
    return out


def gamma_partials(s, alpha, beta, mode="exact"):
    """
    Derivatives of the gamma density with respect to ``alpha`` and ``beta``.

    ``mode="paper"`` uses ``ln(alpha)`` where the exact derivative has the
    digamma function. The logarithmic singularity at ``s = 0`` is removed by
    assigning 0 there.
    """
    if mode not in DERIVATIVE_MODES:
        raise ValueError(f"unknown derivative mode {mode!r}")
    s = np.asarray(s, dtype=float)
    g = gamma_pdf(s, alpha, beta)
    shift = np.log(alpha) if mode == "paper" else special.digamma(alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        dlog_alpha = np.log(beta) - shift + np.log(s)
    d_alpha = np.where(s > 0, g * np.where(s > 0, dlog_alpha, 0.0), 0.0)
    d_beta = g * (alpha / beta - s)
    return d_alpha, d_beta


def _conv_nodes(t, step, lower):
    """Trapezoid nodes ``s`` (= t - tau) and weights on ``[0, t - lower]``."""
    span = t - lower
    if span <= 0:
        return np.zeros(1), np.zeros(1)
    m = int(np.ceil(span / step - 1e-9))
    s = np.linspace(0.0, span, m + 1)
    w = np.full(m + 1, span / m)
    w[0] *= 0.5
    w[-1] *= 0.5
    return s, w


def _convolve(t, t0, lam, alpha, beta, step, lower, with_partials, mode):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if step <= 0:
        raise ValueError("quadrature step must be positive")
    n_out = 5 if with_partials else 1
    out = np.zeros((n_out, t.size))
    for k, tk in enumerate(t):
        s, w = _conv_nodes(tk, step, lower)
        tau = tk - s
        g = gamma_pdf(s, alpha, beta)
        fc, u = _gompertz_parts(tau, t0, lam)
        out[0, k] = np.dot(w, fc * g)
        if with_partials:
            dt0, dlam = partials_cases(tau, t0, lam)
            ga, gb = gamma_partials(s, alpha, beta, mode)
            out[1, k] = np.dot(w, dt0 * g)
            out[2, k] = np.dot(w, dlam * g)
            out[3, k] = np.dot(w, fc * ga)
            out[4, k] = np.dot(w, fc * gb)
    return out


def death_shape(t, t0, lam, kernel, step=DEFAULT_STEP, lower=-LOWER_PAD):
    """
    Normalized deaths peak: convolution of the Gompertz derivative with the
    gamma kernel, integrated by composite trapezoid from ``lower`` to ``t``.
    """
    out = _convolve(t, t0, lam, kernel.alpha, kernel.beta, step, lower, False, "exact")[0]
    return out if np.ndim(t) else out[0]


def partials_deaths(t, t0, lam, kernel, step=DEFAULT_STEP, lower=-LOWER_PAD, mode="paper"):
    """
    Coefficients of ``(delta t0, delta lam, delta alpha, delta beta)`` in the
    first order expansion of :func:`death_shape`, on the same quadrature.

    Returns
    -------
    ndarray, shape (4, len(t))
    """
    return _convolve(t, t0, lam, kernel.alpha, kernel.beta, step, lower, True, mode)[1:]


def death_shape_and_partials(t, t0, lam, kernel, step=DEFAULT_STEP, lower=-LOWER_PAD, mode="paper"):
    """Shape and its four partials in one quadrature pass, shape (5, len(t))."""
    return _convolve(t, t0, lam, kernel.alpha, kernel.beta, step, lower, True, mode)


def cases_curve(model, t):
    t = np.asarray(t, dtype=float)
    out = model.bg_cases(t) * np.ones_like(t)
    for p in model.case_peaks:
        out = out + p.N * gompertz_rate(t, p.t0, p.lam)
    return out


def deaths_curve(model, t, step=DEFAULT_STEP, lower=-LOWER_PAD):
    t = np.asarray(t, dtype=float)
    out = model.bg_deaths(t) * np.ones_like(t)
    for i, nd in zip(model.death_peaks, model.death_norms):
        p = model.case_peaks[i]
        out = out + nd * death_shape(t, p.t0, p.lam, model.kernel, step, lower)
    return out
