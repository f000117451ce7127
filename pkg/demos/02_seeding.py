"""
Monte Carlo start values: a uniform random search over a box of case-peak
parameters, reproducible chunk by chunk for any number of worker threads.

Run with ``python3 demos/02_seeding.py``.
"""
import numpy as np

from _truth import two_regions
from wavefit import seed
from wavefit.synthetic import weekly_from_model

region = two_regions()[1]
cases, _ = weekly_from_model(region, 22, 20, rng=np.random.default_rng(1))

bounds = {"C": (0.0, 2.0e4), "S": (-80.0, 0.0)}
for i, p in enumerate(region.case_peaks, start=1):
    bounds[f"N{i}"] = (0.7 * p.N, 1.3 * p.N)
    bounds[f"lam{i}"] = (0.7 * p.lam, 1.3 * p.lam)
bounds["t01"], bounds["t02"] = (30.0, 80.0), (80.0, 146.0)
box = seed.SearchBox(bounds, trials=200_000, rng_seed=3)

one = seed.mc_search(box, cases, workers=1, polish=True)
four = seed.mc_search(box, cases, workers=4, polish=True)
assert one.params == four.params
print(f"region {one.region}: chi2 {one.chi2:.1f} on {one.ndf} dof, probability {one.prob:.3f}")
truth = {"C": region.bg_cases.C, "S": region.bg_cases.S}
for i, p in enumerate(region.case_peaks, start=1):
    truth.update({f"N{i}": p.N, f"lam{i}": p.lam, f"t0{i}": p.t0})
for name in box.names:
    print(f"  {name:5s} found {one.params[name]:12.5g}   true {truth[name]:12.5g}")
print("identical result with 1 and 4 workers")
