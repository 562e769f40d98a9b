"""Smoothness certificates, online-vs-batch discrepancies and Wald sets."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .chisq import chi2_quantile
from .errors import DimensionMismatch
from .gauss import Cholesky, GaussianState, TvBounds, gaussian_kl, tv_bounds

LOG_FLOOR = 1e-300


def _floored_exp(log_value: float) -> float:
    # exp of a large negative number, kept representable
    return max(math.exp(max(log_value, -745.0)), LOG_FLOOR)


@dataclass(frozen=True)
class SmoothnessReport:
    """Per-step smoothness and effective-size quantities.

    ``tau3_hat`` and ``tau4_hat`` come from global derivative bounds, so they
    are upper bounds of the local quantities (``bounds_not_exact``).
    """

    tau3_hat: float
    tau4_hat: float
    r_la: float
    r_eff: float
    p_eff: float
    lambda_t: float
    p_star: float
    eps_tv: float
    eps_kl: float
    bounds_not_exact: bool = True

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())


def eps_tv(tau3, tau4, p, n_total):
    log_n = math.log(n_total)
    return ((tau4 + tau3**2) * p**2 + tau3 * p + tau3**3 * log_n**3
            + _floored_exp(-8.0 * log_n - 8.0 * p))


def eps_kl(tau3, tau4, p, n_total):
    log_n = math.log(n_total)
    return math.sqrt((tau4 + tau3**2) * p**2 + tau3**3 * log_n**3
                     + _floored_exp(-7.0 * log_n))


def smoothness_report(model, batch, prior: GaussianState, pmle_pair, n_total: int,
                      t_total: int) -> SmoothnessReport:
    """Certificates for one step from its pMLE pair ``(theta_hat, precision_hat)``.

    ``n_total`` is the overall sample size N and ``t_total`` the number of
    steps T; the batch size n is taken from ``batch``.
    """
    theta_hat, precision_hat = pmle_pair
    chol = Cholesky(precision_hat)
    p = chol.dim
    if prior.dim != p or model.dim(batch) != p:
        raise DimensionMismatch("prior, batch and pMLE pair disagree in dimension")
    lam_min = float(np.linalg.eigvalsh(chol.matrix)[0])
    b3, b4 = model.deriv34_opnorm_bounds(batch)
    tau3 = b3 / lam_min**1.5
    tau4 = b4 / lam_min**2
    r_la = 2.0 * math.sqrt(p) + math.sqrt(2.0 * math.log(n_total))
    # F~^{-1} V is similar to the symmetric F~^{-1/2} V F~^{-1/2}
    ev = np.linalg.eigvalsh(chol.sandwich(model.score_matrix_v(batch)))
    ev = np.clip(ev, 0.0, None)
    p_eff = float(ev.sum())
    lam = float(ev.max())
    n = batch.n
    r_eff = math.sqrt(p_eff) + math.sqrt(2.0 * lam * (math.log(n) + math.log(t_total)))
    p_star = max(float(p), math.log(n), math.log(t_total))
    return SmoothnessReport(
        tau3_hat=tau3, tau4_hat=tau4, r_la=r_la, r_eff=r_eff, p_eff=p_eff,
        lambda_t=lam, p_star=p_star, eps_tv=eps_tv(tau3, tau4, p, n_total),
        eps_kl=eps_kl(tau3, tau4, p, n_total))


@dataclass(frozen=True)
class DiscrepancyReport:
    mean_term: float
    frob_term: float
    tv: TvBounds
    kl_online_baseline: float
    kl_baseline_online: float
    baseline: str

    def to_dict(self):
        return {
            "mean_term": self.mean_term,
            "frob_term": self.frob_term,
            "tv": self.tv.to_dict(),
            "kl_online_baseline": self.kl_online_baseline,
            "kl_baseline_online": self.kl_baseline_online,
            "baseline": self.baseline,
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def discrepancy(online: GaussianState, baseline: GaussianState,
                baseline_tag: str = "laplace_full") -> DiscrepancyReport:
    """Compare Pi_t with a full-data Gaussian.

    The mean gap is measured in the online precision, the covariance gap in
    the baseline precision.
    """
    if online.dim != baseline.dim:
        raise DimensionMismatch(f"dimensions differ: {online.dim} vs {baseline.dim}")
    mean_term = online.mahalanobis(baseline.mean)
    ev = np.linalg.eigvalsh(baseline.chol.sandwich(online.precision))
    frob = float(np.linalg.norm(ev - 1.0))
    return DiscrepancyReport(
        mean_term=mean_term, frob_term=frob, tv=tv_bounds(online, baseline),
        kl_online_baseline=gaussian_kl(online, baseline),
        kl_baseline_online=gaussian_kl(baseline, online), baseline=baseline_tag)


@dataclass(frozen=True)
class WaldSet:
    """Ellipsoid {theta : ||Omega^{1/2}(theta - mu)||^2 <= chi2_{p, alpha}}."""

    center: GaussianState
    alpha: float
    radius_sq: float

    @classmethod
    def from_state(cls, state: GaussianState, alpha: float = 0.05):
        return cls(state, float(alpha), chi2_quantile(state.dim, alpha))

    def contains(self, theta) -> bool:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.center.dim,):
            raise DimensionMismatch("theta dimension differs from the set's")
        return self.center.mahalanobis(theta) ** 2 <= self.radius_sq

    def length_1d(self) -> float:
        if self.center.dim != 1:
            raise DimensionMismatch("interval length needs p = 1")
        return 2.0 * math.sqrt(self.radius_sq / float(self.center.precision[0, 0]))


def wald_contains(wset: WaldSet, theta) -> bool:
    return wset.contains(theta)


def wald_length_1d(wset: WaldSet) -> float:
    return wset.length_1d()


def coverage_se(cp: float, m: int) -> float:
    """Binomial standard error of a coverage proportion over m replications."""
    return math.sqrt(cp * (1.0 - cp) / m)
