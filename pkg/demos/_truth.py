"""Two synthetic regions shared by the demos."""
from wavefit import model as wm

KERNEL = wm.GammaKernel(8.0, 0.51)


def two_regions(kernel=KERNEL):
    a = wm.RegionModel(
        "A", [wm.GompertzPeak(2.0e6, 0.08, 50.0)], [6.0e3],
        wm.LinearBackground(2.0e4, -100.0), wm.LinearBackground(80.0, -0.3), kernel,
    )
    b = wm.RegionModel(
        "B", [wm.GompertzPeak(1.2e6, 0.07, 45.0), wm.GompertzPeak(6.0e5, 0.09, 110.0)], [3.6e3, 1.5e3],
        wm.LinearBackground(1.0e4, -40.0), wm.LinearBackground(40.0, -0.1), kernel,
    )
    return [a, b]
