"""How far the online posterior sits from full-data Gaussians as the batch size grows."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context

import numpy as np

from ..diagnostics import discrepancy, smoothness_report
from ..engine import UpdateMethod, batch_baselines, eta_residual, run_online
from ..errors import SolverError
from ..gauss import GaussianState
from ..models import BernoulliInterceptModel, GaussianLinearModel, LogisticModel
from ..rng import stream
from .data import gen_gaussian_linear, gen_intercept, gen_logistic_gaussian
from .io import write_csv, write_jsonl

SCALING_COLUMNS = ["model", "method", "baseline", "n", "steps", "reps", "median_tv_upper",
                   "median_tv_lower", "median_delta", "median_mean_term",
                   "median_frob_term", "median_kl", "median_rho"]


def _prior(cfg, p):
    return GaussianState(np.full(p, cfg.prior_mean), np.eye(p) / cfg.prior_sd**2)


def _data(cfg, rep, kind):
    theta0 = cfg.theta0_vector()
    if kind == "gaussian_linear":
        return gen_gaussian_linear(cfg.n_total, cfg.p, theta0, cfg.noise_precision, cfg.seed, rep)
    if cfg.dim == 0:
        return gen_intercept(cfg.n_total, theta0[0], cfg.seed, rep)
    return gen_logistic_gaussian(cfg.n_total, cfg.p, theta0, cfg.seed, rep)


def _model(cfg, kind):
    if kind == "gaussian_linear":
        return GaussianLinearModel(cfg.noise_precision)
    return BernoulliInterceptModel() if cfg.dim == 0 else LogisticModel()


def _method(cfg, name, rep, n):
    if name == "laplace":
        return UpdateMethod.laplace(), None
    if name == "exact":
        return UpdateMethod.exact(), None
    return UpdateMethod.variational(cfg.vb_config()), stream(cfg.seed, rep, n, "vb")


def _replicate(args):
    """All methods and batch sizes for one replication; returns row dicts."""
    cfg, rep, kind, methods = args
    model = _model(cfg, kind)
    data = _data(cfg, rep, kind)
    prior = _prior(cfg, cfg.p)
    theta0 = np.asarray(cfg.theta0_vector(), dtype=float)
    base = batch_baselines(model, data, prior, require_mle=False)
    targets = [("laplace_full", base.laplace_full)]
    if base.mle_normal is not None:
        targets.append(("mle_normal", base.mle_normal))
    out = []
    for n in cfg.batch_sizes:
        batches = data.split(n)
        for name in methods:
            method, rng = _method(cfg, name, rep, n)
            try:
                recs = run_online(model, batches, prior, method, vb_rng=rng)
            except SolverError as exc:
                raise exc.annotate(n=n, rep=rep, method=name) from None
            last = recs[-1]
            rho = eta_residual(recs, base.pmle_theta, model, batches)
            smooth = smoothness_report(model, batches[-1], last.prior,
                                       (last.theta_hat, last.precision_hat),
                                       cfg.n_total, len(batches))
            for tag, target in targets:
                rep_ = discrepancy(last.posterior, target, tag)
                out.append({
                    "model": model.name, "method": name, "baseline": tag, "n": n,
                    "steps": len(batches), "rep": rep, "rho": rho,
                    "discrepancy": rep_.to_dict(), "smoothness": smooth.to_dict(),
                    "mean_error": float(np.linalg.norm(last.posterior.mean - theta0)),
                })
    return out


def run_logistic_scaling(cfg, threads: int | None = None, write: bool = True):
    """Median discrepancies per (model, method, baseline, n); returns (rows, records)."""
    threads = cfg.threads if threads is None else threads
    jobs = [(cfg, rep, "binary", cfg.methods) for rep in range(cfg.replications)]
    if cfg.gaussian_control:
        jobs += [(cfg, rep, "gaussian_linear", ("exact",)) for rep in range(cfg.replications)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads, mp_context=get_context("spawn")) as ex:
            parts = list(ex.map(_replicate, jobs))
    else:
        parts = [_replicate(j) for j in jobs]
    records = [r for part in parts for r in part]
    rows = summarize(records)
    if write:
        os.makedirs(cfg.out_dir, exist_ok=True)
        path = os.path.join(cfg.out_dir, "tv_scaling.csv")
        write_csv(path, SCALING_COLUMNS, rows)
        write_jsonl(os.path.join(cfg.out_dir, "diagnostics.jsonl"), records)
        if cfg.svg:
            from .plots import emit_svg
            emit_svg(path, "tv_scaling")
    return rows, records


def summarize(records):
    groups = {}
    for r in records:
        key = (r["model"], r["method"], r["baseline"], r["n"])
        groups.setdefault(key, []).append(r)
    rows = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3])):
        g = groups[key]
        d = [x["discrepancy"] for x in g]
        med = lambda vals: float(np.median(vals))  # noqa: E731
        rows.append((*key, g[0]["steps"], len(g),
                     med([x["tv"]["upper"] for x in d]), med([x["tv"]["lower"] for x in d]),
                     med([x["tv"]["delta"] for x in d]), med([x["mean_term"] for x in d]),
                     med([x["frob_term"] for x in d]),
                     med([x["kl_online_baseline"] for x in d]), med([x["rho"] for x in g])))
    return rows


def loglog_slope(ns, values):
    """Least-squares slope of log(values) against log(ns)."""
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])
