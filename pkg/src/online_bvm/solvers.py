"""Penalized MLE, Laplace approximation and full-covariance variational fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NoConvergence, NotPositiveDefinite, SeparationDetected
from .gauss import Cholesky, GaussianState
from .models import MiniBatch
from .rng import stream

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100
NEWTON_MAX_HALVINGS = 30
NEWTON_STEP_RTOL = 1e-6
NEWTON_BASIN_RTOL = 1e-12
MLE_MAX_ITER = 2000
SEPARATION_NORM = 1e3
# information below this fraction of its largest possible value means the fit saturated
SEPARATION_INFO_RTOL = 1e-10
VB_DIAG_FLOOR = 1e-8


@dataclass(frozen=True)
class SolverReport:
    """Outcome of an iterative solve.

    ``grad_norm`` is the sup-norm the stopping rule was checked against.
    """

    iterations: int
    grad_norm: float
    step_halvings: int
    converged: bool
    objective: float = float("nan")

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "step_halvings": self.step_halvings,
            "converged": self.converged,
            "objective": self.objective,
        }


class PenalizedObjective:
    """L_t(theta) - 0.5 ||Omega^{1/2}(theta - mu)||^2 for a Gaussian prior N(mu, Omega^{-1})."""

    def __init__(self, model, batch: MiniBatch, prior: GaussianState):
        p = model.dim(batch)
        if prior.dim != p:
            raise DimensionMismatch(f"prior has dimension {prior.dim}, model needs {p}")
        self.model = model
        self.batch = batch
        self.prior = prior
        self.dim = p

    def penalty(self, theta):
        d = np.asarray(theta, dtype=float) - self.prior.mean
        return 0.5 * float(d @ self.prior.precision @ d)

    def value(self, theta) -> float:
        return self.model.loglik(self.batch, theta) - self.penalty(theta)

    def grad(self, theta):
        d = np.asarray(theta, dtype=float) - self.prior.mean
        return self.model.grad(self.batch, theta) - self.prior.precision @ d

    def neg_hessian(self, theta):
        """F~ = Omega + F_{t,theta}."""
        return self.prior.precision + self.model.hessian(self.batch, theta)


class PmleResult(NamedTuple):
    theta: np.ndarray
    precision: np.ndarray
    report: SolverReport


def _scaled_sup(g, x):
    return float(np.max(np.abs(g) / (1.0 + np.abs(x))))


def newton_maximize(value, grad, neg_hessian, x0, *, tol=NEWTON_TOL,
                    max_iter=NEWTON_MAX_ITER, diverge_norm=None):
    """Damped Newton ascent with step halving on objective decrease.

    Stops once every gradient coordinate satisfies |g_j| <= tol (1 + |x_j|)
    and the Newton step has become negligible. Returns ``(x, H, report)``
    where ``H`` is the negated Hessian at the returned point.
    """
    x = np.array(x0, dtype=float)
    fx = value(x)
    halvings = 0
    iterations = 0
    converged = False
    for _ in range(max_iter + 1):
        g = grad(x)
        if not np.all(np.isfinite(g)):
            raise NoConvergence(f"non-finite gradient after {iterations} iterations")
        h = neg_hessian(x)
        step = Cholesky(h).solve(g)
        gnorm = _scaled_sup(g, x)
        if gnorm <= tol and np.all(np.abs(step) <= NEWTON_STEP_RTOL * (1.0 + np.abs(x))):
            converged = True
            break
        if iterations == max_iter:
            break
        # inside the quadratic basin the predicted gain is below rounding noise
        # of the objective, so the comparison below would reject good steps
        in_basin = float(g @ step) <= NEWTON_BASIN_RTOL * (1.0 + abs(fx))
        t = 1.0
        for _ in range(NEWTON_MAX_HALVINGS + 1):
            cand = x + t * step
            fc = value(cand)
            if np.isfinite(fc) and (fc >= fx or in_basin):
                break
            t *= 0.5
            halvings += 1
        else:
            break
        x, fx = cand, fc
        iterations += 1
        if diverge_norm is not None and np.max(np.abs(x)) > diverge_norm:
            raise SeparationDetected(
                f"iterates diverged (|theta| = {np.max(np.abs(x)):.3g})")
    report = SolverReport(iterations, gnorm, halvings, converged, float(fx))
    return x, h, report


def pmle(obj: PenalizedObjective, init=None, tol: float = NEWTON_TOL,
         max_iter: int = NEWTON_MAX_ITER) -> PmleResult:
    """Maximize the penalized log-likelihood; precision is F~ at the maximizer.

    Non-convergence is reported through ``report.converged``, not raised.
    """
    x0 = obj.prior.mean if init is None else init
    theta, h, report = newton_maximize(obj.value, obj.grad, obj.neg_hessian, x0,
                                       tol=tol, max_iter=max_iter)
    return PmleResult(theta, h, report)


def mle(model, batch: MiniBatch, init=None, tol: float = NEWTON_TOL,
        max_iter: int = MLE_MAX_ITER) -> PmleResult:
    """Unpenalized MLE with its observed information ``F_{theta}``.

    Raises SeparationDetected when the iterates run off to infinity, which is
    how complete separation shows up for binary models.
    """
    p = model.dim(batch)
    x0 = np.zeros(p) if init is None else init
    try:
        theta, h, report = newton_maximize(
            lambda th: model.loglik(batch, th), lambda th: model.grad(batch, th),
            lambda th: model.hessian(batch, th), x0, tol=tol, max_iter=max_iter,
            diverge_norm=SEPARATION_NORM)
    except NotPositiveDefinite as exc:
        if getattr(model, "binary", False):
            raise SeparationDetected(f"information matrix degenerated: {exc}") from None
        raise
    if getattr(model, "binary", False):
        cap = float(np.linalg.eigvalsh(model.score_matrix_v(batch))[-1])
        if float(np.linalg.eigvalsh(h)[0]) <= SEPARATION_INFO_RTOL * cap:
            raise SeparationDetected(
                f"fitted probabilities saturated at |theta| = {np.max(np.abs(theta)):.3g}")
    if not report.converged:
        raise NoConvergence(f"MLE did not converge after {report.iterations} iterations "
                            f"(scaled gradient {report.grad_norm:.3g})")
    return PmleResult(theta, h, report)


def laplace(theta_hat, precision_hat) -> GaussianState:
    """Laplace approximation N(theta_hat, precision_hat^{-1})."""
    return GaussianState(theta_hat, precision_hat)


@dataclass(frozen=True)
class VbConfig:
    """Settings for the stochastic-gradient ELBO ascent.

    ``init`` selects the starting Gaussian: the Laplace approximation of the
    current penalized problem, or the prior itself.
    """

    draws: int = 1000
    max_iter: int = 5000
    step_size: float = 1e-2
    step_decay: float = 0.999
    grad_tol: float = 1e-4
    seed: int = 0
    init: str = "laplace"
    max_halvings: int = 30
    max_move: float = 1.0

    def __post_init__(self):
        if self.draws < 1:
            raise ValueError("draws must be at least 1")
        if not self.step_size > 0:
            raise ValueError("step size must be positive")
        if not 0 < self.step_decay <= 1:
            raise ValueError("step decay must lie in (0, 1]")
        if not self.max_move > 0:
            raise ValueError("max_move must be positive")
        if self.init not in ("laplace", "prior"):
            raise ValueError("init must be 'laplace' or 'prior'")

    def updated(self, **changes):
        return replace(self, **changes)


def _kl_to_prior(mean, factor, prior: GaussianState):
    """KL(N(mean, factor factor') || prior) and its gradients in (mean, factor)."""
    p = mean.size
    omega = prior.precision
    d = mean - prior.mean
    omega_c = omega @ factor
    diag = np.diag(factor)
    value = 0.5 * (float(np.sum(omega_c * factor)) + float(d @ omega @ d) - p
                   - 2.0 * float(np.sum(np.log(diag))) - prior.chol.logdet)
    g_factor = omega_c - np.diag(1.0 / diag)
    return value, omega @ d, g_factor


class _ElboSurface:
    """ELBO as a function of (mean, lower-triangular covariance factor).

    The MC version uses one frozen set of standard-normal draws, so repeated
    evaluations are deterministic and the surface is smooth.
    """

    def __init__(self, obj: PenalizedObjective, z=None):
        self.obj = obj
        self.p = obj.dim
        self.exact = obj.model.expected_loglik(obj.batch, obj.prior.mean,
                                               np.eye(self.p)) is not None
        self.z = None if self.exact else np.asarray(z, dtype=float)
        self.rows, self.cols = np.tril_indices(self.p, -1)

    def expected_loglik(self, mean, factor):
        model, batch = self.obj.model, self.obj.batch
        if self.exact:
            val, gm, gc = model.expected_loglik(batch, mean, factor)
            return val, gm, gc, 0.0
        thetas = mean + self.z @ factor.T
        ll = model.loglik_draws(batch, thetas)
        g = model.grad_draws(batch, thetas)
        k = ll.size
        se = float(np.std(ll, ddof=1) / math.sqrt(k)) if k > 1 else float("inf")
        return float(np.mean(ll)), g.mean(axis=0), g.T @ self.z / k, se

    def elbo(self, mean, factor):
        e, gm, gc, se = self.expected_loglik(mean, factor)
        kl, km, kc = _kl_to_prior(mean, factor, self.obj.prior)
        return e - kl, gm - km, np.tril(gc - kc), se

    # flat parameter vector: mean, strictly-lower factor entries, log-diagonal
    def pack(self, mean, factor):
        return np.concatenate([mean, factor[self.rows, self.cols], np.log(np.diag(factor))])

    def unpack(self, x):
        p = self.p
        mean = x[:p]
        factor = np.zeros((p, p))
        m = self.rows.size
        factor[self.rows, self.cols] = x[p:p + m]
        logdiag = np.maximum(x[p + m:], math.log(VB_DIAG_FLOOR))
        factor[np.diag_indices(p)] = np.exp(logdiag)
        return mean, factor

    def value_and_grad(self, x):
        mean, factor = self.unpack(x)
        val, gm, gc, _ = self.elbo(mean, factor)
        grad = np.concatenate([gm, gc[self.rows, self.cols], np.diag(gc) * np.diag(factor)])
        return val, grad


def covariance_factor(q: GaussianState):
    """Lower Cholesky factor of q's covariance."""
    return np.linalg.cholesky(q.covariance())


def _draws(cfg_draws, p, rng):
    return rng.standard_normal((cfg_draws, p))


def elbo(obj: PenalizedObjective, q: GaussianState, draws: int = 1000, seed=0,
         return_se: bool = False):
    """E_q[L_t] - KL(q || prior), by Monte Carlo unless a closed form exists.

    ``seed`` may be an int or a Generator; draws are reparameterized as
    ``mean + C z`` with ``C`` the covariance Cholesky factor.
    """
    if q.dim != obj.dim:
        raise DimensionMismatch("variational family dimension differs from the model")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "vb")
    surface = _ElboSurface(obj, None)
    if not surface.exact:
        surface.z = _draws(draws, obj.dim, rng)
    val, _, _, se = surface.elbo(q.mean, covariance_factor(q))
    return (val, se) if return_se else val


def vb_fit(obj: PenalizedObjective, cfg: VbConfig = VbConfig(), init: GaussianState | None = None,
           rng: np.random.Generator | None = None):
    """Gradient ascent on the ELBO over full-covariance Gaussians.

    Parameters are the mean and the covariance Cholesky factor, whose
    diagonal is carried on the log scale. One set of ``cfg.draws`` normal
    vectors is frozen per fit (common random numbers), so a step is accepted
    only if it does not lower the objective; otherwise the step is halved.
    The step shrinks by ``cfg.step_decay`` after every accepted iteration,
    and no parameter moves by more than ``cfg.max_move`` in one iteration
    (this keeps the log-diagonal from overshooting when gradients are large).
    Stops when the sup-norm of the parameter gradient is at most
    ``cfg.grad_tol``.
    """
    if init is None:
        if cfg.init == "prior":
            init = obj.prior
        else:
            res = pmle(obj)
            init = laplace(res.theta, res.precision)
    if init.dim != obj.dim:
        raise DimensionMismatch("initial state dimension differs from the model")
    surface = _ElboSurface(obj, None)
    if not surface.exact:
        rng = stream(cfg.seed, "vb") if rng is None else rng
        surface.z = _draws(cfg.draws, obj.dim, rng)

    x = surface.pack(init.mean, covariance_factor(init))
    fx, gx = surface.value_and_grad(x)
    step = cfg.step_size
    halvings = 0
    iterations = 0
    converged = False
    while True:
        gnorm = float(np.max(np.abs(gx)))
        if gnorm <= cfg.grad_tol:
            converged = True
            break
        if iterations >= cfg.max_iter:
            break
        for _ in range(cfg.max_halvings + 1):
            cand = x + min(step, cfg.max_move / gnorm) * gx
            fc, gc = surface.value_and_grad(cand)
            if np.isfinite(fc) and fc >= fx:
                break
            step *= 0.5
            halvings += 1
        else:
            break
        x, fx, gx = cand, fc, gc
        iterations += 1
        step *= cfg.step_decay

    mean, factor = surface.unpack(x)
    inv_factor = solve_triangular(factor, np.eye(obj.dim), lower=True)
    precision = inv_factor.T @ inv_factor
    state = GaussianState(mean, 0.5 * (precision + precision.T))
    return state, SolverReport(iterations, gnorm, halvings, converged, float(fx))
