"""Coverage and relative-efficiency study for fair-coin data.

Every replication gets its own data stream and, per batch size, its own
variational stream, so results do not depend on scheduling. Updates run in
a compiled loop that follows the same iteration as :func:`vb_fit` on the
intercept-only model (checked against the generic engine in the tests).
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from ..chisq import chi2_quantile
from ..diagnostics import coverage_se
from ..engine import UpdateMethod, run_online
from ..errors import SolverError
from ..gauss import GaussianState
from ..models import BernoulliInterceptModel, MiniBatch
from ..rng import stream
from ..solvers import VbConfig
from .data import gen_bernoulli
from .kernels import vb_intercept_run
from .io import write_csv

# Fitting each step from the prior with a loose gradient tolerance; the
# tolerance is a calibrated hyperparameter of this study only.
SEC9_VB_DEFAULTS = {"init": "prior", "grad_tol": 3e-3}
CHUNK = 50


def sec9_vb_config(cfg) -> VbConfig:
    return VbConfig(seed=cfg.seed, **{**SEC9_VB_DEFAULTS, **cfg.vb})


def batch_sums(y, n):
    """Per-step success counts and batch sizes when ``y`` is cut into size-n blocks."""
    starts = np.arange(0, y.shape[-1], n)
    sums = np.add.reduceat(y, starts, axis=-1)
    sizes = np.diff(np.append(starts, y.shape[-1])).astype(float)
    return sums, sizes


def vb_replication(sums, sizes, seed, rep, n, vbcfg: VbConfig, prior_mean, prior_sd):
    """Online variational path of one replication via the compiled kernel.

    Returns the posterior mean after every step and the final precision.
    """
    if vbcfg.init != "prior":
        raise ValueError("the compiled path starts every update from the prior")
    draws = stream(seed, rep, n, "vb").standard_normal((sums.size, vbcfg.draws))
    path, sd, _, _ = vb_intercept_run(
        np.asarray(sums, dtype=float), np.asarray(sizes, dtype=float), draws,
        float(prior_mean), float(prior_sd), vbcfg.step_size, vbcfg.step_decay,
        vbcfg.grad_tol, vbcfg.max_iter, vbcfg.max_halvings, vbcfg.max_move)
    return path, 1.0 / sd**2


def vb_generic(y, n, rep, cfg, vbcfg: VbConfig):
    """One replication through the general engine (slow reference path)."""
    prior = GaussianState([cfg.prior_mean], [[1.0 / cfg.prior_sd**2]])
    batches = MiniBatch(y).split(n)
    recs = run_online(BernoulliInterceptModel(), batches, prior,
                      UpdateMethod.variational(vbcfg), vb_rng=stream(cfg.seed, rep, n, "vb"))
    return recs


def _unit(args):
    """Run one (batch size, block of replications) unit."""
    cfg, n, reps = args
    vbcfg = sec9_vb_config(cfg)
    paths, precs = [], []
    for r in reps:
        y = gen_bernoulli(cfg.n_total, cfg.seed, r).responses
        sums, sizes = batch_sums(y, n)
        path, prec = vb_replication(sums, sizes, cfg.seed, r, n, vbcfg, cfg.prior_mean,
                                    cfg.prior_sd)
        paths.append(path)
        precs.append(prec)
    return n, list(reps), np.vstack(paths), np.array(precs)


@dataclass
class Sec9Result:
    coverage: list   # rows (method, n, cp, cp_se, mean_length)
    re_curve: list   # rows (n, t, re)
    final_means: dict
    final_precisions: dict
    mle: np.ndarray


def _mle_stats(y, theta0, q):
    """Plug-in MLE, its information, coverage and interval length per replication."""
    n_total = y.shape[1]
    s = y.sum(axis=1)
    with np.errstate(divide="ignore"):
        theta = np.log(s) - np.log(n_total - s)
    p = s / n_total
    info = n_total * p * (1.0 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        covered = (theta - theta0) ** 2 * info <= q
        length = 2.0 * np.sqrt(q / info)
    return theta, covered, length


def run_sec9(cfg, threads: int | None = None, write: bool = True) -> Sec9Result:
    threads = cfg.threads if threads is None else threads
    theta0 = float(cfg.theta0_vector()[0])
    q = chi2_quantile(1, cfg.alpha)
    reps = list(range(cfg.replications))
    y = np.stack([gen_bernoulli(cfg.n_total, cfg.seed, r).responses for r in reps])
    units = [(cfg, n, tuple(reps[i:i + CHUNK]))
             for n in cfg.batch_sizes for i in range(0, len(reps), CHUNK)]
    try:
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads, mp_context=get_context("spawn")) as ex:
                outs = list(ex.map(_unit, units))
        else:
            outs = [_unit(u) for u in units]
    except SolverError as exc:
        raise exc.annotate(experiment="bernoulli_sec9") from None

    paths, precs = {}, {}
    for n, rs, path, prec in outs:
        paths.setdefault(n, []).append(path)
        precs.setdefault(n, []).append(prec)
    m = len(reps)
    theta_ml, cov_ml, len_ml = _mle_stats(y, theta0, q)
    if not np.all(np.isfinite(len_ml)):
        raise SolverError("MLE is infinite in some replication (all-equal responses)")
    coverage = [("mle", cfg.n_total, float(cov_ml.mean()), coverage_se(cov_ml.mean(), m),
                 float(len_ml.mean()))]
    re_rows = []
    finals, final_prec = {}, {}
    for n in cfg.batch_sizes:
        path = np.vstack(paths[n])
        prec = np.concatenate(precs[n])
        if not (np.all(np.isfinite(path)) and np.all(prec > 0)):
            raise SolverError(f"non-finite online estimate for batch size {n}")
        mu_t = path[:, -1]
        covered = (mu_t - theta0) ** 2 * prec <= q
        length = 2.0 * np.sqrt(q / prec)
        coverage.append(("online_vb", n, float(covered.mean()), coverage_se(covered.mean(), m),
                         float(length.mean())))
        finals[n], final_prec[n] = mu_t, prec
        # relative efficiency against the MLE on the same prefix of the data
        cum = np.cumsum(batch_sums(y, n)[0], axis=1)
        sizes = np.cumsum(batch_sums(y, n)[1])
        for t in range(path.shape[1]):
            s_t, n_t = cum[:, t], sizes[t]
            if np.any(s_t == 0) or np.any(s_t == n_t):
                continue
            ml_t = np.log(s_t) - np.log(n_t - s_t)
            re = float(np.sum((path[:, t] - theta0) ** 2) / np.sum((ml_t - theta0) ** 2))
            re_rows.append((n, t + 1, re))
    result = Sec9Result(coverage, re_rows, finals, final_prec, theta_ml)
    if write:
        write_sec9(cfg, result)
    return result


def write_sec9(cfg, result: Sec9Result):
    os.makedirs(cfg.out_dir, exist_ok=True)
    cov_path = os.path.join(cfg.out_dir, "coverage.csv")
    re_path = os.path.join(cfg.out_dir, "re_curve.csv")
    write_csv(cov_path, ["method", "n", "cp", "cp_se", "mean_length"], result.coverage)
    write_csv(re_path, ["n", "t", "re"], result.re_curve)
    if cfg.svg:
        from .plots import emit_svg
        emit_svg(re_path, "re_curve")
        emit_svg(cov_path, "coverage")
    return cov_path, re_path
