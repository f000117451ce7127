"""
Inference on a converged fit: confidence bands, kernel summaries and
case-fatality rates, all by first order propagation of the full parameter
covariance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from . import model as wm
from .gls import SHARED, gradient_rows

log = logging.getLogger(__name__)


def z_value(level):
    """Two-sided normal quantile; ``z_value(0.95) == 1.96`` by convention."""
    if not 0 < level < 1:
        raise ValueError("confidence level must be in (0, 1)")
    if abs(level - 0.95) < 1e-12:
        return 1.96
    return float(stats.norm.ppf(0.5 + 0.5 * level))


@dataclass(frozen=True)
class Band:
    t: np.ndarray
    center: np.ndarray
    half_width: np.ndarray
    level: float = 0.95

    @property
    def lower(self):
        return self.center - self.half_width

    @property
    def upper(self):
        return self.center + self.half_width

    def to_csv(self):
        lines = ["t,center,lower,upper"]
        for row in zip(self.t, self.center, self.lower, self.upper):
            lines.append(",".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"


def propagate(G, cov):
    """Per-row standard deviation ``sqrt(g^T cov g)`` for the rows of ``G``."""
    var = np.einsum("ij,jk,ik->i", G, cov, G)
    return np.sqrt(np.clip(var, 0.0, None))


def curve_band(curve, region, fit, t, level=0.95):
    """
    Pointwise confidence band of a fitted cases or deaths curve.

    The gradient of the curve with respect to every fitted parameter is the
    design row of the linearized model at ``t``.
    """
    t = np.asarray(t, dtype=float)
    mdl = fit.model(region)
    G = gradient_rows(fit.layout, mdl, t, curve, fit.step, mode=fit.derivative_mode)
    if curve == "cases":
        center = wm.cases_curve(mdl, t)
    else:
        center = wm.deaths_curve(mdl, t, fit.step)
    return Band(t, center, z_value(level) * propagate(G, fit.Vb), level)


def kernel_band(fit, t, level=0.95):
    """Confidence band of the fitted gamma kernel density."""
    if not fit.layout.fit_kernel:
        raise ValueError("kernel was fixed in this fit")
    t = np.asarray(t, dtype=float)
    k = fit.kernel
    ia, ib = fit.index(SHARED, "alpha"), fit.index(SHARED, "beta")
    da, db = wm.gamma_partials(t, k.alpha, k.beta, mode="exact")
    cov = fit.Vb[np.ix_([ia, ib], [ia, ib])]
    sd = propagate(np.column_stack([da, db]), cov)
    return Band(t, wm.gamma_pdf(t, k.alpha, k.beta), z_value(level) * sd, level)


@dataclass(frozen=True)
class KernelSummary:
    alpha: float
    beta: float
    sigma_alpha: float
    sigma_beta: float
    rho: float
    mean: float
    sigma_mean: float
    cv: float
    sigma_cv: float


def summarize_kernel(alpha, beta, cov):
    """
    Mean ``alpha/beta`` and coefficient of variation ``alpha**-0.5`` of the
    gamma kernel with delta-method errors from the 2x2 covariance of
    ``(alpha, beta)``.
    """
    cov = np.asarray(cov, dtype=float)
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    va, vb, cab = cov[0, 0], cov[1, 1], cov[0, 1]
    mean = alpha / beta
    var_mean = va / beta**2 + vb * alpha**2 / beta**4 - 2.0 * cab * alpha / beta**3
    sa, sb = np.sqrt(max(va, 0.0)), np.sqrt(max(vb, 0.0))
    rho = cab / (sa * sb) if sa > 0 and sb > 0 else 0.0
    return KernelSummary(
        alpha, beta, sa, sb, rho,
        mean, float(np.sqrt(max(var_mean, 0.0))),
        alpha**-0.5, sa / (2.0 * alpha**1.5),
    )


def kernel_summary(fit):
    ia, ib = fit.index(SHARED, "alpha"), fit.index(SHARED, "beta")
    cov = fit.Vb[np.ix_([ia, ib], [ia, ib])]
    return summarize_kernel(fit.kernel.alpha, fit.kernel.beta, cov)


@dataclass(frozen=True)
class CfrEstimate:
    region: str
    peak: object  # peak index, or "combined"
    value: float
    sigma: float
    indices: tuple


def ratio_with_error(nd, nc, var_nd, var_nc, cov_dc):
    """Ratio ``nd/nc`` and its first order standard deviation."""
    r = nd / nc
    var = var_nd / nc**2 + var_nc * nd**2 / nc**4 - 2.0 * cov_dc * nd / nc**3
    return r, float(np.sqrt(max(var, 0.0)))


def cfr_single(fit, region, peak):
    """Case-fatality rate ``N_d / N_c`` of one wave with its delta-method error."""
    i_d = fit.index(region, "Nd", peak)
    i_c = fit.index(region, "Nc", peak)
    nd, nc = fit.B[i_d], fit.B[i_c]
    V = fit.Vb
    if not nc > 0 or abs(nc) < 3.0 * np.sqrt(max(V[i_c, i_c], 0.0)):
        raise ValueError(f"{region} peak {peak + 1}: cases normalization is consistent with zero")
    r, s = ratio_with_error(nd, nc, V[i_d, i_d], V[i_c, i_c], V[i_d, i_c])
    return CfrEstimate(region, peak, float(r), s, (i_d, i_c))


def combine_gls(values, cov):
    """
    Covariance-weighted mean of correlated estimates of one quantity.

    Returns ``(mean, sigma)`` with ``sigma**2 = (1^T C^-1 1)^-1``.
    """
    values = np.asarray(values, dtype=float)
    cov = np.asarray(cov, dtype=float)
    ones = np.ones_like(values)
    try:
        cf = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance of the estimates is singular or not positive definite") from None
    if np.linalg.cond(cov) > 1e14:
        raise ValueError("covariance of the estimates is singular")
    w = np.linalg.solve(cf.T, np.linalg.solve(cf, ones))
    vf = 1.0 / (ones @ w)
    return float(vf * (w @ values)), float(np.sqrt(vf))


def cfr_combine(estimates, fit):
    """
    Merge per-wave CFRs of one region into a single value.

    The covariance of the ratios is ``D V D^T`` with ``V`` the block of the fit
    covariance over every contributing normalization and ``D`` the Jacobian of
    the ratios; the merged value is their GLS mean.
    """
    if len(estimates) < 2:
        raise ValueError("need at least two estimates to combine")
    regions = {e.region for e in estimates}
    if len(regions) != 1:
        raise ValueError("estimates must come from one region")
    idx = []
    for e in estimates:
        for j in e.indices:
            if j not in idx:
                idx.append(j)
    V = fit.Vb[np.ix_(idx, idx)]
    D = np.zeros((len(estimates), len(idx)))
    for k, e in enumerate(estimates):
        i_d, i_c = e.indices
        nd, nc = fit.B[i_d], fit.B[i_c]
        D[k, idx.index(i_d)] = 1.0 / nc
        D[k, idx.index(i_c)] = -nd / nc**2
    V12 = D @ V @ D.T
    values = [e.value for e in estimates]
    mean, sigma = combine_gls(values, V12)
    return CfrEstimate(regions.pop(), "combined", mean, sigma, tuple(idx))


def region_cfrs(fit, region):
    """Per-wave CFRs of a region plus, when there are several, their combination."""
    mdl = fit.model(region)
    singles = []
    for i in mdl.death_peaks:
        try:
            singles.append(cfr_single(fit, region, i))
        except ValueError as exc:
            log.warning("%s", exc)
    if len(singles) > 1:
        return singles + [cfr_combine(singles, fit)]
    return singles


def gamma_mean_cv_jacobian(alpha, beta):
    """Jacobian of ``(mean, cv)`` with respect to ``(alpha, beta)``."""
    return np.array([[1.0 / beta, -alpha / beta**2], [-0.5 * alpha**-1.5, 0.0]])


def digamma_gap(alpha):
    """``digamma(alpha) - ln(alpha)``: the offset between the two alpha-derivative forms."""
    return float(special.digamma(alpha) - np.log(alpha))
