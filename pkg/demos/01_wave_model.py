"""
The wave model: a Gompertz-derivative cases peak, a gamma delay kernel and
the deaths curve obtained by convolving the two.

Run with ``python3 demos/01_wave_model.py``.
"""
import numpy as np
from scipy.integrate import trapezoid

from wavefit import model as wm
from wavefit import uncertainty as unc

peak = wm.GompertzPeak(N=2.0e6, lam=0.08, t0=50.0)
kernel = wm.GammaKernel(alpha=8.0, beta=0.51)
print(f"cases peak: height {peak.height:.4g}/day at t0 = {peak.t0}")
print(f"kernel: mean delay {kernel.mean:.2f} d, coefficient of variation {1 / np.sqrt(kernel.alpha):.3f}")

# the deaths shape is the cases shape delayed by the kernel, still of unit area
t = np.arange(peak.t0 - 60.0 / peak.lam, 400.0, 0.25)
cases = wm.gompertz_rate(t, peak.t0, peak.lam)
deaths = wm.death_shape(t, peak.t0, peak.lam, kernel)
print(f"cases shape area  {trapezoid(cases, t):.6f}")
print(f"deaths shape area {trapezoid(deaths, t):.6f}")
lag = np.sum(t * deaths) / np.sum(deaths) - np.sum(t * cases) / np.sum(cases)
print(f"shift of the centroid {lag:.3f} d (kernel mean {kernel.mean:.3f} d)")

# a full region: cases = sum of peaks + line, deaths = sum of delayed peaks + line
region = wm.RegionModel(
    "A", [peak], [6.0e3], wm.LinearBackground(2.0e4, -100.0), wm.LinearBackground(80.0, -0.3), kernel
)
weeks = 7.0 * np.arange(20) + 3.0
print("\n  t   cases/day  deaths/day")
for tk, c, d in zip(weeks[::3], wm.cases_curve(region, weeks[::3]), wm.deaths_curve(region, weeks[::3])):
    print(f"{tk:4.0f} {c:10.0f} {d:10.1f}")

# two conventions for the derivative of the kernel with respect to alpha
print(f"\npsi(alpha) - ln(alpha) at alpha = 8: {unc.digamma_gap(8.0):.5f}")
