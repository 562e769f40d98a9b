"""Full-covariance Gaussians in precision form, and distances between them.

Every Gaussian is stored as ``N(mean, precision^{-1})``. Covariances are only
materialised through triangular solves against the precision's Cholesky
factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr

from .chisq import chi2_quantile, chi2_cdf  # noqa: F401  (re-exported)
from .errors import DimensionMismatch, NotPositiveDefinite

SYMMETRY_RTOL = 1e-12
PIVOT_RTOL = 1e-12
# Gaussian comparison lemma: the Delta/sqrt(2) upper bound needs the spectral
# gap of one whitened precision ratio below this value.
DELTA_UPPER_SPECTRAL_LIMIT = 0.684
DELTA_LOWER_LIMIT = 1.0 / 3.0


class Cholesky:
    """Lower Cholesky factor ``L`` of an SPD matrix ``A = L L^T``."""

    def __init__(self, matrix):
        a = np.array(matrix, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
        scale = max(np.abs(a).max(), np.finfo(float).tiny)
        if np.abs(a - a.T).max() > SYMMETRY_RTOL * scale:
            raise NotPositiveDefinite("matrix is not symmetric")
        a = 0.5 * (a + a.T)
        if not np.all(np.isfinite(a)):
            raise NotPositiveDefinite("matrix has non-finite entries")
        try:
            lower = np.linalg.cholesky(a)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"Cholesky failed: {exc}") from None
        pivots = np.diag(lower) ** 2
        floor = PIVOT_RTOL * np.trace(a) / a.shape[0]
        if not np.all(pivots > floor):
            raise NotPositiveDefinite(
                f"pivot {pivots.min():.3e} below scale-aware floor {floor:.3e}")
        self.matrix = a
        self.lower = lower
        self.dim = a.shape[0]

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def solve(self, b):
        """Return ``A^{-1} b``."""
        y = solve_triangular(self.lower, b, lower=True)
        return solve_triangular(self.lower, y, lower=True, trans="T")

    def whiten(self, b):
        """Return ``L^{-1} b``; ``||L^{-1} b||`` equals ``||A^{-1/2} b||``."""
        return solve_triangular(self.lower, b, lower=True)

    def inverse(self):
        inv = self.solve(np.eye(self.dim))
        return 0.5 * (inv + inv.T)

    def sandwich(self, other):
        """Return ``L^{-1} B L^{-T}``, similar to ``A^{-1/2} B A^{-1/2}``."""
        left = self.whiten(np.asarray(other, dtype=float))
        out = self.whiten(left.T).T
        return 0.5 * (out + out.T)


def cholesky(matrix) -> Cholesky:
    return Cholesky(matrix)


@dataclass(frozen=True)
class GaussianState:
    """``N(mean, precision^{-1})`` with an SPD precision."""

    mean: np.ndarray
    precision: np.ndarray
    _chol: Cholesky = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.array(self.mean, dtype=float))
        prec = np.atleast_2d(np.array(self.precision, dtype=float))
        if mean.ndim != 1:
            raise DimensionMismatch("mean must be a vector")
        if prec.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"precision shape {prec.shape} does not match mean length {mean.size}")
        chol = Cholesky(prec)
        mean.setflags(write=False)
        sym = chol.matrix
        sym.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "precision", sym)
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def from_covariance(cls, mean, covariance):
        cov_chol = Cholesky(covariance)
        return cls(mean, cov_chol.inverse())

    @classmethod
    def isotropic(cls, mean, sd):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(mean, np.eye(mean.size) / float(sd) ** 2)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def chol(self) -> Cholesky:
        return self._chol

    def covariance(self):
        return self._chol.inverse()

    def mahalanobis(self, theta) -> float:
        """``||precision^{1/2} (theta - mean)||_2``."""
        d = np.asarray(theta, dtype=float) - self.mean
        return float(np.linalg.norm(self._chol.lower.T @ d))

    def logpdf(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = x - self.mean
        quad = np.sum((d @ self._chol.lower) ** 2, axis=1)
        return 0.5 * (self._chol.logdet - self.dim * math.log(2 * math.pi) - quad)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "precision": self.precision.tolist()}


def _check_dims(q1: GaussianState, q2: GaussianState):
    if q1.dim != q2.dim:
        raise DimensionMismatch(f"dimensions differ: {q1.dim} vs {q2.dim}")


def _ratio_eigenvalues(q1, q2):
    """Eigenvalues of ``Omega_2^{-1/2} Omega_1 Omega_2^{-1/2}``."""
    return np.linalg.eigvalsh(q2.chol.sandwich(q1.precision))


def gaussian_kl(q1: GaussianState, q2: GaussianState) -> float:
    """KL(q1 || q2) with the mean gap weighted by ``q2``'s precision."""
    _check_dims(q1, q2)
    # eigenvalues of Omega_1^{-1/2} Omega_2 Omega_1^{-1/2}
    lam = np.linalg.eigvalsh(q1.chol.sandwich(q2.precision))
    dev = lam - 1.0
    trace_logdet = float(np.sum(dev - np.log1p(dev)))
    mean_term = q2.mahalanobis(q1.mean) ** 2
    return max(0.0, 0.5 * (trace_logdet + mean_term))


def gaussian_tv_1d(q1: GaussianState, q2: GaussianState) -> float:
    """Exact total variation between two univariate Gaussians."""
    _check_dims(q1, q2)
    if q1.dim != 1:
        raise DimensionMismatch("exact TV is only available for p = 1")
    m1, m2 = float(q1.mean[0]), float(q2.mean[0])
    s1 = 1.0 / math.sqrt(q1.precision[0, 0])
    s2 = 1.0 / math.sqrt(q2.precision[0, 0])
    if s1 > s2:
        m1, m2, s1, s2 = m2, m1, s2, s1
    if s1 == s2:
        return math.erf(abs(m1 - m2) / (2.0 * s1) / math.sqrt(2.0))
    # log phi1 - log phi2 = a x^2 + b x + c, with a < 0 since s1 < s2
    a = 0.5 / s2**2 - 0.5 / s1**2
    b = m1 / s1**2 - m2 / s2**2
    c = 0.5 * m2**2 / s2**2 - 0.5 * m1**2 / s1**2 + math.log(s2 / s1)
    disc = b * b - 4.0 * a * c
    root = math.sqrt(max(disc, 0.0))
    q = -0.5 * (b + math.copysign(root, b)) if b != 0.0 else 0.5 * root
    if b == 0.0:
        r1, r2 = -root / (2.0 * abs(a)), root / (2.0 * abs(a))
    else:
        r1, r2 = sorted((q / a, c / q))
    # phi1 dominates on (r1, r2)
    p1 = ndtr((r2 - m1) / s1) - ndtr((r1 - m1) / s1)
    p2 = ndtr((r2 - m2) / s2) - ndtr((r1 - m2) / s2)
    return float(min(1.0, max(0.0, p1 - p2)))


def delta_metric(q1: GaussianState, q2: GaussianState) -> float:
    """Largest of the two weighted mean gaps and two whitened precision gaps."""
    _check_dims(q1, q2)
    return max(_delta_terms(q1, q2))


def _delta_terms(q1, q2):
    d = q2.mean - q1.mean
    mean2 = float(np.linalg.norm(q2.chol.lower.T @ d))
    mean1 = float(np.linalg.norm(q1.chol.lower.T @ d))
    frob21 = float(np.linalg.norm(_ratio_eigenvalues(q1, q2) - 1.0))
    frob12 = float(np.linalg.norm(_ratio_eigenvalues(q2, q1) - 1.0))
    return mean2, mean1, frob21, frob12


@dataclass(frozen=True)
class TvBounds:
    lower: float
    upper: float
    delta: float

    def to_dict(self):
        return {"lower": self.lower, "upper": self.upper, "delta": self.delta}


def tv_bounds(q1: GaussianState, q2: GaussianState) -> TvBounds:
    """Computable two-sided bounds on the total variation distance."""
    _check_dims(q1, q2)
    delta = delta_metric(q1, q2)
    upper = min(1.0,
                math.sqrt(gaussian_kl(q1, q2) / 2.0),
                math.sqrt(gaussian_kl(q2, q1) / 2.0))
    spectral = min(np.abs(_ratio_eigenvalues(q1, q2) - 1.0).max(),
                   np.abs(_ratio_eigenvalues(q2, q1) - 1.0).max())
    if spectral <= DELTA_UPPER_SPECTRAL_LIMIT:
        upper = min(upper, delta / math.sqrt(2.0))
    lower = delta / 200.0 if delta <= DELTA_LOWER_LIMIT else 0.0
    return TvBounds(lower=min(lower, upper), upper=upper, delta=delta)


def sample(q: GaussianState, seed, k: int):
    """Draw ``k`` vectors ``mean + L^{-T} z`` where ``L L^T`` is the precision.

    ``seed`` may be an int, a ``SeedSequence`` or a ``numpy.random.Generator``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal((k, q.dim))
    offsets = solve_triangular(q.chol.lower, z.T, lower=True, trans="T").T
    return q.mean + offsets
