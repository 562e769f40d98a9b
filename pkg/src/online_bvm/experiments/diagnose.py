"""Run the online engine on a CSV of observations and report per-step diagnostics."""
from __future__ import annotations

import os

import numpy as np

from ..diagnostics import discrepancy, smoothness_report
from ..engine import UpdateMethod, batch_baselines, eta_residual, run_online
from ..errors import ConfigError
from ..gauss import GaussianState
from ..models import MiniBatch, model_from_name, read_minibatch_csv
from .io import write_jsonl


def run_diagnose(cfg, write: bool = True):
    """Per-step smoothness certificates, residual and discrepancy to the pooled fit.

    The model defaults to logistic regression with an intercept-only design
    when the CSV has no covariate columns.
    """
    if not cfg.data:
        raise ConfigError("diagnose needs a data CSV")
    data = read_minibatch_csv(cfg.data)
    name = cfg.model or ("bernoulli_intercept" if data.design is None else "logistic")
    model = model_from_name(name, cfg.noise_precision)
    p = model.dim(data)
    prior = GaussianState(np.full(p, cfg.prior_mean), np.eye(p) / cfg.prior_sd**2)
    n = cfg.batch_sizes[0]
    batches = data.split(n)
    method_name = cfg.methods[0]
    if method_name == "variational":
        method = UpdateMethod.variational(cfg.vb_config())
    elif method_name == "exact":
        method = UpdateMethod.exact()
    else:
        method = UpdateMethod.laplace()
    log_path = os.path.join(cfg.out_dir, "updates.jsonl") if write else None
    if write:
        os.makedirs(cfg.out_dir, exist_ok=True)
    recs = run_online(model, batches, prior, method, log_path=log_path)
    out = []
    for t, rec in enumerate(recs, start=1):
        pooled = MiniBatch.concat(batches[:t])
        base = batch_baselines(model, pooled, prior, require_mle=False)
        smooth = smoothness_report(model, batches[t - 1], rec.prior,
                                   (rec.theta_hat, rec.precision_hat), data.n, len(batches))
        entry = {
            "t": t, "n": batches[t - 1].n, "model": name, "method": method_name,
            "rho": eta_residual(recs, base.pmle_theta, model, batches, t=t),
            "smoothness": smooth.to_dict(),
            "discrepancy": discrepancy(rec.posterior, base.laplace_full).to_dict(),
        }
        if base.mle_normal is not None:
            entry["discrepancy_mle"] = discrepancy(rec.posterior, base.mle_normal,
                                                   "mle_normal").to_dict()
        out.append(entry)
    if write:
        write_jsonl(os.path.join(cfg.out_dir, "diagnostics.jsonl"), out)
    return out
