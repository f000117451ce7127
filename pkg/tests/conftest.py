"""Shared synthetic problems for the test suite."""
import numpy as np
import pytest

from wavefit import model as wm
from wavefit.synthetic import weekly_from_model

KERNEL = wm.GammaKernel(8.0, 0.51)


def two_region_truth(kernel=KERNEL):
    """Two regions sharing one kernel: one single-wave, one double-wave."""
    a = wm.RegionModel(
        "A",
        [wm.GompertzPeak(2.0e6, 0.08, 50.0)],
        [6.0e3],
        wm.LinearBackground(2.0e4, -100.0),
        wm.LinearBackground(80.0, -0.3),
        kernel,
    )
    b = wm.RegionModel(
        "B",
        [wm.GompertzPeak(1.2e6, 0.07, 45.0), wm.GompertzPeak(6.0e5, 0.09, 110.0)],
        [3.6e3, 1.5e3],
        wm.LinearBackground(1.0e4, -40.0),
        wm.LinearBackground(40.0, -0.1),
        kernel,
    )
    return [a, b]


SIZES = {"A": (20, 18), "B": (22, 20)}


def two_region_data(truth, rng=None):
    return [weekly_from_model(m, *SIZES[m.region], rng=rng) for m in truth]


def perturbed_start(truth, frac=0.05):
    """Start models with timing moved off the truth and zero deaths terms."""
    out = []
    for m in truth:
        peaks = [wm.GompertzPeak(p.N * (1 - frac), p.lam * (1 + frac), p.t0 + 2.0) for p in m.case_peaks]
        out.append(
            wm.RegionModel(
                m.region, peaks, [0.0] * len(m.death_norms), m.bg_cases, wm.LinearBackground(0.0, 0.0),
                m.kernel, death_peaks=m.death_peaks,
            )
        )
    return out


@pytest.fixture(scope="session")
def truth():
    return two_region_truth()


@pytest.fixture(scope="session")
def exact_data(truth):
    return two_region_data(truth)


@pytest.fixture(scope="session")
def noisy_data(truth):
    return two_region_data(truth, np.random.default_rng(2024))


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, when those checks ran."""
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.line(number))
