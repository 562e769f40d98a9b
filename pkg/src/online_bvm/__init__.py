"""Online Gaussian posterior updates with Bernstein-von Mises diagnostics."""
from .errors import (ConfigError, DimensionMismatch, InvalidAlpha, MalformedCsv,
                     NoConvergence, NotPositiveDefinite, OnlineBvmError, SeparationDetected,
                     SolverError)
from .gauss import (Cholesky, GaussianState, TvBounds, chi2_quantile, cholesky, delta_metric,
                    gaussian_kl, gaussian_tv_1d, sample, tv_bounds)
from .models import (BernoulliInterceptModel, GaussianLinearModel, LogisticModel, MiniBatch,
                     conjugate_posterior, model_from_name, read_minibatch_csv)
from .solvers import (PenalizedObjective, SolverReport, VbConfig, elbo, laplace, mle, pmle,
                      vb_fit)
from .engine import (BatchBaselines, UpdateMethod, UpdateRecord, batch_baselines, eta_residual,
                     run_online)
from .diagnostics import (DiscrepancyReport, SmoothnessReport, WaldSet, discrepancy,
                          smoothness_report, wald_contains, wald_length_1d)

__version__ = "0.1.0"
