"""Sequential posterior updates over a stream of mini-batches."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigError, DimensionMismatch, NoConvergence, SolverError
from .gauss import Cholesky, GaussianState
from .models import GaussianLinearModel, MiniBatch, conjugate_posterior
from .rng import stream
from .solvers import (PenalizedObjective, SolverReport, VbConfig, laplace, mle, pmle,
                      vb_fit)


@dataclass(frozen=True)
class UpdateMethod:
    """How Pi_t is formed from the tilted posterior at each step."""

    kind: str
    vb: VbConfig | None = None

    @classmethod
    def exact(cls):
        return cls("exact")

    @classmethod
    def laplace(cls):
        return cls("laplace")

    @classmethod
    def variational(cls, cfg: VbConfig = VbConfig()):
        return cls("variational", cfg)

    def __post_init__(self):
        if self.kind not in ("exact", "laplace", "variational"):
            raise ConfigError(f"unknown update method {self.kind!r}")
        if self.kind == "variational" and self.vb is None:
            object.__setattr__(self, "vb", VbConfig())


@dataclass(frozen=True)
class UpdateRecord:
    t: int
    prior: GaussianState
    posterior: GaussianState
    theta_hat: np.ndarray
    precision_hat: np.ndarray
    pmle_report: SolverReport
    vb_report: SolverReport | None
    wall_ms: float

    def log_entry(self):
        rep = self.vb_report or self.pmle_report
        return {
            "t": self.t,
            "mu": self.posterior.mean.tolist(),
            "precision": self.posterior.precision.tolist(),
            "grad_norm": rep.grad_norm,
            "iterations": rep.iterations,
            "wall_ms": self.wall_ms,
        }


def _update(model, batch, prior, method, rng):
    model.validate(batch)
    obj = PenalizedObjective(model, batch, prior)
    res = pmle(obj, init=prior.mean)
    if not res.report.converged:
        raise NoConvergence(f"pMLE stalled with scaled gradient {res.report.grad_norm:.3g}")
    vb_report = None
    if method.kind == "exact":
        post = conjugate_posterior(model.noise_precision, batch, prior)
    elif method.kind == "laplace":
        post = laplace(res.theta, res.precision)
    else:
        init = prior if method.vb.init == "prior" else laplace(res.theta, res.precision)
        post, vb_report = vb_fit(obj, method.vb, init=init, rng=rng)
    return post, res, vb_report


def run_online(model, batches: Iterable[MiniBatch], prior0: GaussianState,
               method: UpdateMethod, log_path=None, vb_rng=None):
    """Chain Pi_{t-1} -> Pi_t over ``batches`` and return one record per step.

    ``batches`` is consumed lazily. Solver errors are re-raised tagged with
    the failing step. For variational updates a single random stream (from
    ``method.vb.seed`` unless ``vb_rng`` is given) feeds the draws of every
    step in turn.
    """
    if method.kind == "exact" and not isinstance(model, GaussianLinearModel):
        raise ConfigError("exact conjugate updates need the Gaussian-linear model")
    rng = None
    if method.kind == "variational":
        rng = vb_rng if vb_rng is not None else stream(method.vb.seed, "vb")
    log = open(log_path, "w") if log_path is not None else None
    records = []
    prior = prior0
    try:
        for t, batch in enumerate(batches, start=1):
            if model.dim(batch) != prior0.dim:
                raise DimensionMismatch(
                    f"step {t}: batch dimension {model.dim(batch)} != prior dimension {prior0.dim}")
            start = time.perf_counter()
            try:
                post, res, vb_report = _update(model, batch, prior, method, rng)
            except SolverError as exc:
                raise exc.annotate(step=t) from None
            rec = UpdateRecord(t, prior, post, res.theta, res.precision, res.report,
                               vb_report, 1e3 * (time.perf_counter() - start))
            records.append(rec)
            if log is not None:
                log.write(json.dumps(rec.log_entry()) + "\n")
            prior = post
    finally:
        if log is not None:
            log.close()
    return records


@dataclass(frozen=True)
class BatchBaselines:
    """Full-data comparison targets after pooling every batch seen so far.

    ``mle_normal`` is N(theta_ML, F^{-1}) with the information evaluated at
    ``information_at`` ("theta_ml" plug-in, or "theta0" when supplied).
    """

    pmle_theta: np.ndarray
    pmle_precision: np.ndarray
    mle_theta: np.ndarray | None
    mle_precision: np.ndarray | None
    laplace_full: GaussianState
    mle_normal: GaussianState | None
    information_at: str


def batch_pmle(model, data: MiniBatch, prior0: GaussianState, init=None):
    res = pmle(PenalizedObjective(model, data, prior0), init=init)
    if not res.report.converged:
        raise NoConvergence("full-data pMLE did not converge")
    return res


def batch_mle(model, data: MiniBatch, init=None):
    return mle(model, data, init=init)


def batch_baselines(model, data, prior0: GaussianState, theta0=None,
                    require_mle: bool = True) -> BatchBaselines:
    """Pooled pMLE, its Laplace normal, and the unpenalized MLE normal.

    With ``require_mle=False`` a separated data set leaves the MLE fields at
    None instead of raising SeparationDetected.
    """
    if not isinstance(data, MiniBatch):
        data = MiniBatch.concat(data)
    res = batch_pmle(model, data, prior0)
    full = laplace(res.theta, res.precision)
    try:
        ml = batch_mle(model, data, init=res.theta)
    except SolverError:
        if require_mle:
            raise
        return BatchBaselines(res.theta, res.precision, None, None, full, None, "none")
    if theta0 is None:
        info, tag = ml.precision, "theta_ml"
    else:
        info, tag = model.hessian(data, np.asarray(theta0, dtype=float)), "theta0"
    return BatchBaselines(res.theta, res.precision, ml.theta, ml.precision, full,
                          GaussianState(ml.theta, info), tag)


def eta_residual(records, theta, model, batches, t: int | None = None) -> float:
    """Accumulated approximation error rho at step ``t`` (default: last step).

    Sums grad eta_s(theta) = grad L~_s(theta) + Omega_s (theta - mu_s) over
    s < t and whitens with the local pMLE precision of step t.
    """
    batches = list(batches)
    t = len(records) if t is None else int(t)
    if not 1 <= t <= len(records):
        raise ValueError(f"step {t} outside 1..{len(records)}")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    p = records[0].posterior.dim
    if theta.shape != (p,):
        raise DimensionMismatch(f"theta has shape {theta.shape}, expected ({p},)")
    total = np.zeros(p)
    for s in range(t - 1):
        rec = records[s]
        obj = PenalizedObjective(model, batches[s], rec.prior)
        post = rec.posterior
        total += obj.grad(theta) + post.precision @ (theta - post.mean)
    return float(np.linalg.norm(Cholesky(records[t - 1].precision_hat).whiten(total)))
