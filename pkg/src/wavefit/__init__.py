"""Multi-region Gompertz wave fits of cases and deaths with a shared gamma delay kernel."""
from .model import (
    GammaKernel,
    GompertzPeak,
    LinearBackground,
    RegionModel,
    cases_curve,
    death_shape,
    deaths_curve,
    gamma_pdf,
    gompertz_rate,
    partials_cases,
    partials_deaths,
)
from .ingest import WeeklySeries, aggregate_weekly, deaths_window, inflate_errors, read_daily_csv
from .stats import chi2_prob
from .seed import SearchBox, SeedResult, chi2_cases, default_box, mc_search
from .gls import FitResult, Layout, build_design, iterate_fit, solve_gls
from .uncertainty import cfr_combine, cfr_single, curve_band, kernel_summary

__version__ = "0.1.0"
