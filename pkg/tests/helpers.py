"""Shared test utilities: random matrix factories and Monte Carlo error bars."""

import numpy as np


def random_spd(d, rng, jitter=0.1):
    """Random symmetric positive definite matrix with a modest spectrum."""
    g = rng.standard_normal((d, d))
    return g @ g.T / d + jitter * np.eye(d)


def block_mean_se(x, n_blocks=40):
    """Standard error of a chain mean from non-overlapping block means.

    Blocks absorb autocorrelation, so this is a usable error bar for MCMC
    output as long as blocks are longer than the correlation length.
    """
    x = np.asarray(x, dtype=float).ravel()
    usable = (x.size // n_blocks) * n_blocks
    blocks = x[:usable].reshape(n_blocks, -1).mean(axis=1)
    return float(blocks.std(ddof=1) / np.sqrt(n_blocks))


def exact_gaussian_cloud(mean, cov, size, rng):
    """Gaussian point set whose sample moments equal (mean, cov) exactly."""
    from swissmc import draw_gaussian

    return draw_gaussian(mean, cov, size, rng, match_moments=True)
