"""Chi-square tail probability."""
from scipy import special


def chi2_prob(chi2, ndf):
    """Probability that a chi-square variable with ``ndf`` degrees of freedom exceeds ``chi2``."""
    if chi2 < 0:
        raise ValueError("chi2 must be >= 0")
    if ndf < 1:
        raise ValueError("ndf must be >= 1")
    return float(special.gammaincc(0.5 * ndf, 0.5 * chi2))
