"""Synthetic data sources for the simulation studies."""
import numpy as np
from scipy.special import expit

from ..models import MiniBatch
from ..rng import stream


def gen_bernoulli(n_total: int, seed, rep: int = 0) -> MiniBatch:
    """``n_total`` fair coin flips, intercept-only design."""
    rng = stream(seed, rep, "data")
    return MiniBatch(rng.integers(0, 2, n_total).astype(float))


def gen_logistic_gaussian(n_total: int, p: int, theta0, seed, rep: int = 0) -> MiniBatch:
    """Standard-normal design with Bernoulli(b'(x'theta0)) responses."""
    theta0 = np.broadcast_to(np.asarray(theta0, dtype=float), (p,))
    rng = stream(seed, rep, "data")
    x = rng.standard_normal((n_total, p))
    y = (rng.random(n_total) < expit(x @ theta0)).astype(float)
    return MiniBatch(y, x)


def gen_gaussian_linear(n_total: int, p: int, theta0, noise_precision: float, seed,
                        rep: int = 0) -> MiniBatch:
    theta0 = np.broadcast_to(np.asarray(theta0, dtype=float), (p,))
    rng = stream(seed, rep, "data")
    x = rng.standard_normal((n_total, p))
    y = x @ theta0 + rng.standard_normal(n_total) / np.sqrt(noise_precision)
    return MiniBatch(y, x)


def gen_intercept(n_total: int, theta0: float, seed, rep: int = 0) -> MiniBatch:
    """Intercept-only Bernoulli(b'(theta0)) responses; fair coins when theta0 = 0."""
    if float(theta0) == 0.0:
        return gen_bernoulli(n_total, seed, rep)
    rng = stream(seed, rep, "data")
    return MiniBatch((rng.random(n_total) < expit(float(theta0))).astype(float))
