"""Mini-batch log-likelihoods with exact first and second derivatives.

All models expose the log-likelihood ``L_t``, its gradient, and the negated
Hessian ``F_{t,theta} = -grad^2 L_t(theta)``. Binary models additionally give
uniform upper bounds on the operator norms of the third and fourth
derivatives, which feed the smoothness diagnostics.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, MalformedCsv
from .gauss import Cholesky, GaussianState

# Uniform bound on |b'''| and |b''''| for b(eta) = log(1 + e^eta); the sharp
# constants are smaller, 1 is kept as a deliberately loose envelope.
LOGISTIC_HIGHER_DERIV_BOUND = 1.0


def softplus(eta):
    """b(eta) = log(1 + e^eta), overflow-safe."""
    return np.logaddexp(0.0, eta)


def logistic_weight(eta):
    """b''(eta) = e^eta / (1 + e^eta)^2."""
    return expit(eta) * expit(-eta)


@dataclass(frozen=True)
class MiniBatch:
    """One block of observations.

    ``design`` may be omitted, in which case the batch is intercept-only and
    the design is an implicit column of ones.
    """

    responses: np.ndarray
    design: np.ndarray | None = None
    _sum_y: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        y = np.atleast_1d(np.array(self.responses, dtype=float))
        if y.ndim != 1 or y.size < 1:
            raise DimensionMismatch("responses must be a non-empty vector")
        object.__setattr__(self, "responses", y)
        if self.design is not None:
            x = np.array(self.design, dtype=float)
            if x.ndim == 1:
                x = x[:, None]
            if x.ndim != 2 or x.shape[0] != y.size:
                raise DimensionMismatch(
                    f"design has shape {x.shape} but there are {y.size} responses")
            object.__setattr__(self, "design", x)
        object.__setattr__(self, "_sum_y", float(y.sum()))

    @property
    def n(self) -> int:
        return self.responses.size

    @property
    def sum_y(self) -> float:
        return self._sum_y

    @property
    def p(self) -> int:
        return 1 if self.design is None else self.design.shape[1]

    @property
    def design_matrix(self):
        if self.design is None:
            return np.ones((self.n, 1))
        return self.design

    @classmethod
    def concat(cls, batches):
        batches = list(batches)
        if not batches:
            raise ValueError("no batches to concatenate")
        y = np.concatenate([b.responses for b in batches])
        if all(b.design is None for b in batches):
            return cls(y)
        return cls(y, np.vstack([b.design_matrix for b in batches]))

    def split(self, size: int):
        """Cut into consecutive batches of ``size``; a remainder forms the last one."""
        if size < 1:
            raise ValueError("batch size must be positive")
        out = []
        for start in range(0, self.n, size):
            stop = min(start + size, self.n)
            x = None if self.design is None else self.design[start:stop]
            out.append(MiniBatch(self.responses[start:stop], x))
        return out


def _theta(theta, p):
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if th.shape != (p,):
        raise DimensionMismatch(f"theta has shape {th.shape}, expected ({p},)")
    return th


def _thetas(thetas, p):
    th = np.asarray(thetas, dtype=float)
    if th.ndim == 1 and p == 1:
        th = th[:, None]
    if th.ndim != 2 or th.shape[1] != p:
        raise DimensionMismatch(f"draws have shape {th.shape}, expected (k, {p})")
    return th


def _check_binary(batch):
    y = batch.responses
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("binary models need responses in {0, 1}")


class LogisticModel:
    """Logistic regression: L_t(theta) = sum_i y_i x_i'theta - b(x_i'theta)."""

    name = "logistic"
    binary = True

    def dim(self, batch: MiniBatch) -> int:
        return batch.p

    def _eta(self, batch, theta):
        return batch.design_matrix @ _theta(theta, batch.p)

    def loglik(self, batch, theta) -> float:
        eta = self._eta(batch, theta)
        y = batch.responses
        # y*eta - b(eta) == -y*b(-eta) - (1-y)*b(eta), free of cancellation
        return float(-np.sum(y * softplus(-eta) + (1.0 - y) * softplus(eta)))

    def grad(self, batch, theta):
        eta = self._eta(batch, theta)
        return batch.design_matrix.T @ (batch.responses - expit(eta))

    def hessian(self, batch, theta):
        """F = -grad^2 L = X' diag(b''(X theta)) X."""
        x = batch.design_matrix
        w = logistic_weight(self._eta(batch, theta))
        return (x * w[:, None]).T @ x

    def loglik_draws(self, batch, thetas):
        th = _thetas(thetas, batch.p)
        eta = th @ batch.design_matrix.T
        y = batch.responses
        return -(softplus(-eta) @ y + softplus(eta) @ (1.0 - y))

    def grad_draws(self, batch, thetas):
        th = _thetas(thetas, batch.p)
        eta = th @ batch.design_matrix.T
        return (batch.responses - expit(eta)) @ batch.design_matrix

    def expected_loglik(self, batch, mean, factor):
        return None

    def deriv34_opnorm_bounds(self, batch):
        norms = np.linalg.norm(batch.design_matrix, axis=1)
        c = LOGISTIC_HIGHER_DERIV_BOUND
        return c * float(np.sum(norms**3)), c * float(np.sum(norms**4))

    def score_matrix_v(self, batch):
        x = batch.design_matrix
        return x.T @ x / 4.0

    def validate(self, batch):
        _check_binary(batch)


class BernoulliInterceptModel(LogisticModel):
    """Intercept-only logistic model, computed from (n, sum y) alone."""

    name = "bernoulli_intercept"

    def dim(self, batch):
        return 1

    def loglik(self, batch, theta) -> float:
        th = float(_theta(theta, 1)[0])
        s, n = batch.sum_y, batch.n
        return float(-(s * softplus(-th) + (n - s) * softplus(th)))

    def grad(self, batch, theta):
        th = _theta(theta, 1)
        return np.array([batch.sum_y - batch.n * expit(th[0])])

    def hessian(self, batch, theta):
        th = _theta(theta, 1)
        return np.array([[batch.n * logistic_weight(th[0])]])

    def loglik_draws(self, batch, thetas):
        th = _thetas(thetas, 1)[:, 0]
        s, n = batch.sum_y, batch.n
        return -(s * softplus(-th) + (n - s) * softplus(th))

    def grad_draws(self, batch, thetas):
        th = _thetas(thetas, 1)
        return batch.sum_y - batch.n * expit(th)

    def deriv34_opnorm_bounds(self, batch):
        c = LOGISTIC_HIGHER_DERIV_BOUND
        return c * batch.n, c * batch.n

    def score_matrix_v(self, batch):
        return np.array([[batch.n / 4.0]])


class GaussianLinearModel:
    """y = X theta + noise with known noise precision; conjugate to Gaussians."""

    name = "gaussian_linear"
    binary = False

    def __init__(self, noise_precision: float = 1.0):
        if not noise_precision > 0:
            raise ValueError("noise precision must be positive")
        self.noise_precision = float(noise_precision)

    def __repr__(self):
        return f"GaussianLinearModel(noise_precision={self.noise_precision})"

    def dim(self, batch):
        return batch.p

    def _const(self, n):
        return 0.5 * n * math.log(self.noise_precision / (2.0 * math.pi))

    def loglik(self, batch, theta) -> float:
        r = batch.responses - batch.design_matrix @ _theta(theta, batch.p)
        return float(-0.5 * self.noise_precision * (r @ r) + self._const(batch.n))

    def grad(self, batch, theta):
        x = batch.design_matrix
        r = batch.responses - x @ _theta(theta, batch.p)
        return self.noise_precision * (x.T @ r)

    def hessian(self, batch, theta):
        _theta(theta, batch.p)
        x = batch.design_matrix
        return self.noise_precision * (x.T @ x)

    def loglik_draws(self, batch, thetas):
        th = _thetas(thetas, batch.p)
        r = batch.responses[None, :] - th @ batch.design_matrix.T
        return -0.5 * self.noise_precision * np.sum(r * r, axis=1) + self._const(batch.n)

    def grad_draws(self, batch, thetas):
        th = _thetas(thetas, batch.p)
        x = batch.design_matrix
        r = batch.responses[None, :] - th @ x.T
        return self.noise_precision * (r @ x)

    def expected_loglik(self, batch, mean, factor):
        """Closed form of E_q[L] for q = N(mean, factor factor'), with gradients.

        Returns ``(value, d/dmean, d/dfactor)``.
        """
        x = batch.design_matrix
        tau = self.noise_precision
        r = batch.responses - x @ mean
        xc = x @ factor
        value = -0.5 * tau * (r @ r + np.sum(xc * xc)) + self._const(batch.n)
        return value, tau * (x.T @ r), -tau * (x.T @ xc)

    def deriv34_opnorm_bounds(self, batch):
        return 0.0, 0.0

    def score_matrix_v(self, batch):
        x = batch.design_matrix
        return self.noise_precision * (x.T @ x)

    def validate(self, batch):
        pass


def conjugate_posterior(noise_precision: float, batch: MiniBatch,
                        prior: GaussianState) -> GaussianState:
    """Exact posterior of the Gaussian-linear model under a Gaussian prior."""
    x = batch.design_matrix
    if x.shape[1] != prior.dim:
        raise DimensionMismatch("design width does not match prior dimension")
    tau = float(noise_precision)
    precision = prior.precision + tau * (x.T @ x)
    rhs = prior.precision @ prior.mean + tau * (x.T @ batch.responses)
    mean = Cholesky(precision).solve(rhs)
    return GaussianState(mean, precision)


def model_from_name(name: str, noise_precision: float = 1.0):
    if name == "logistic":
        return LogisticModel()
    if name == "bernoulli_intercept":
        return BernoulliInterceptModel()
    if name == "gaussian_linear":
        return GaussianLinearModel(noise_precision)
    raise ValueError(f"unknown model {name!r}")


def read_minibatch_csv(path) -> MiniBatch:
    """Read ``y,x1,...,xp`` rows; a lone ``y`` column means intercept-only."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedCsv(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        expected = ["y"] + [f"x{j}" for j in range(1, len(header))]
        if header != expected:
            raise MalformedCsv(f"{path}:1: header must be {','.join(expected)}, got {','.join(header)}")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedCsv(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(c) for c in row]
            except ValueError:
                raise MalformedCsv(f"{path}:{line}: non-numeric field in {row!r}") from None
            if not all(math.isfinite(v) for v in values):
                raise MalformedCsv(f"{path}:{line}: non-finite value")
            rows.append(values)
    if not rows:
        raise MalformedCsv(f"{path}: no data rows")
    data = np.array(rows)
    if data.shape[1] == 1:
        return MiniBatch(data[:, 0])
    return MiniBatch(data[:, 0], data[:, 1:])
