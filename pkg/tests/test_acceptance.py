"""Acceptance checks; each test carries the number of the criterion it covers."""
import math
import os
import time

import numpy as np
import pytest

from online_bvm import (GaussianLinearModel, GaussianState, LogisticModel, MiniBatch,
                        PenalizedObjective, UpdateMethod, chi2_quantile, conjugate_posterior,
                        delta_metric, eta_residual, gaussian_kl, gaussian_tv_1d, run_online)
from online_bvm.chisq import chi2_cdf
from online_bvm.cli import EXIT_OK, main
from online_bvm.experiments.config import config_from_dict
from online_bvm.experiments.data import gen_gaussian_linear
from online_bvm.experiments.scaling import loglog_slope, run_logistic_scaling
from online_bvm.experiments.sec9 import run_sec9
from online_bvm.solvers import _ElboSurface

CORES = os.cpu_count() or 1


@pytest.fixture(scope="module")
def coin_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("coin")
    cfg = config_from_dict({"experiment": "bernoulli_sec9", "out_dir": str(out),
                            "threads": CORES})
    start = time.perf_counter()
    res = run_sec9(cfg)
    elapsed = time.perf_counter() - start
    print(f"\ncoin study: N={cfg.n_total} M={cfg.replications} on {CORES} core(s) "
          f"in {elapsed / 60:.1f} min")
    for row in res.coverage:
        print("  {:<9} n={:<5} cp={:.3f} se={:.4f} length={:.4f}".format(*row))
    return cfg, res, elapsed


def _row(res, method, n):
    return next(r for r in res.coverage if r[0] == method and r[1] == n)


@pytest.mark.slow
@pytest.mark.criterion(1, "coverage and length table, N=1000, M=500")
class TestCoverageTable:
    def test_mle_row(self, coin_study):
        _, res, _ = coin_study
        _, _, cp, _, length = _row(res, "mle", 1000)
        assert abs(cp - 0.944) <= 0.025
        assert abs(length - 0.248) <= 0.010

    def test_full_batch_row(self, coin_study):
        _, res, _ = coin_study
        assert abs(_row(res, "online_vb", 1000)[2] - 0.942) <= 0.025

    def test_unit_batch_row(self, coin_study):
        _, res, _ = coin_study
        _, _, cp, _, length = _row(res, "online_vb", 1)
        assert cp >= 0.965
        assert abs(length - 0.398) <= 0.03

    def test_lengths_decrease_up_to_50(self, coin_study):
        _, res, _ = coin_study
        lengths = [_row(res, "online_vb", n)[4] for n in (1, 2, 4, 6, 8, 10, 20, 50)]
        assert all(b < a for a, b in zip(lengths, lengths[1:])), lengths

    def test_runtime_budget(self, coin_study):
        # 20 minutes on 8 cores; replications are independent, so scale by core count
        _, _, elapsed = coin_study
        assert elapsed * min(CORES, 8) / 8 <= 20 * 60


@pytest.mark.slow
@pytest.mark.criterion(2, "relative efficiency at T n = N")
class TestRelativeEfficiency:
    def _final(self, res):
        out = {}
        for n, t, re in res.re_curve:
            out[n] = re
        return out

    def test_unit_batch_less_efficient(self, coin_study):
        re = self._final(coin_study[1])
        print(f"\nfinal RE: { {n: round(v, 4) for n, v in re.items()} }")
        assert re[1] - re[10] >= 0.15

    def test_large_batches_near_one(self, coin_study):
        re = self._final(coin_study[1])
        for n, v in re.items():
            if n >= 10:
                assert 0.9 <= v <= 1.2, (n, v)


@pytest.mark.criterion(3, "sequential conjugate updates equal the batch posterior")
class TestConjugateExactness:
    @pytest.mark.parametrize("n", [1, 3, 10, 25, 64, 200])
    def test_split(self, n):
        data = gen_gaussian_linear(200, 3, [0.5, -1.0, 2.0], 2.0, 11, 0)
        prior = GaussianState([0.1, 0.0, -0.1], np.diag([0.5, 1.0, 2.0]))
        model = GaussianLinearModel(2.0)
        batches = data.split(n)
        start = time.perf_counter()
        recs = run_online(model, batches, prior, UpdateMethod.exact())
        full = conjugate_posterior(2.0, data, prior)
        assert delta_metric(recs[-1].posterior, full) <= 1e-9
        rng = np.random.default_rng(n)
        for t in range(1, len(recs) + 1):
            theta = full.mean + rng.standard_normal(3)
            assert eta_residual(recs, theta, model, batches, t=t) <= 1e-9
        assert time.perf_counter() - start <= 30


@pytest.mark.slow
@pytest.mark.criterion(4, "discrepancy shrinks with the batch size")
def test_scaling_rate(tmp_path):
    cfg = config_from_dict({"experiment": "logistic_gaussian", "n_total": 1024,
                            "batch_sizes": [16, 32, 64, 128], "replications": 20, "dim": 0,
                            "methods": ["laplace"], "gaussian_control": False,
                            "out_dir": str(tmp_path), "threads": CORES})
    start = time.perf_counter()
    rows, _ = run_logistic_scaling(cfg)
    elapsed = time.perf_counter() - start
    sel = sorted((r[3], r[6]) for r in rows if r[2] == "laplace_full")
    ns = np.array([n for n, _ in sel], dtype=float)
    tv = np.array([v for _, v in sel])
    slope = loglog_slope(ns, tv)
    print(f"\nmedian TV upper {tv.round(5).tolist()} slope {slope:.3f} in {elapsed:.1f} s")
    assert ns.tolist() == [16, 32, 64, 128]
    assert np.all(np.diff(tv) < 0)
    assert -1.0 <= slope <= -0.25
    assert elapsed <= 5 * 60


@pytest.mark.criterion(5, "derivative checks")
class TestDerivatives:
    def test_logistic(self):
        rng = np.random.default_rng(2024)
        m = LogisticModel()
        h = 1e-5
        for _ in range(50):
            n, p = rng.integers(1, 40), rng.integers(1, 5)
            batch = MiniBatch((rng.random(n) < 0.5).astype(float), rng.standard_normal((n, p)))
            th = rng.standard_normal(p)
            eye = np.eye(p)
            g_fd = np.array([(m.loglik(batch, th + h * e) - m.loglik(batch, th - h * e)) / (2 * h)
                             for e in eye])
            h_fd = np.array([(m.grad(batch, th + h * e) - m.grad(batch, th - h * e)) / (2 * h)
                             for e in eye])
            g, hess = m.grad(batch, th), -m.hessian(batch, th)
            assert np.max(np.abs(g - g_fd)) <= 1e-4 * max(1.0, np.max(np.abs(g)))
            assert np.max(np.abs(hess - h_fd)) <= 1e-4 * max(1.0, np.max(np.abs(hess)))

    def test_variational_gradient(self):
        rng = np.random.default_rng(7)
        for p in (1, 2, 4):
            b = MiniBatch(rng.standard_normal(25), rng.standard_normal((25, p)))
            prior = GaussianState(rng.standard_normal(p), np.eye(p) * 0.7)
            surf = _ElboSurface(PenalizedObjective(GaussianLinearModel(1.3), b, prior))
            x = 0.3 * rng.standard_normal(p + p * (p - 1) // 2 + p)
            _, g = surf.value_and_grad(x)
            h = 1e-6
            fd = np.array([(surf.value_and_grad(x + h * e)[0]
                            - surf.value_and_grad(x - h * e)[0]) / (2 * h)
                           for e in np.eye(x.size)])
            assert np.max(np.abs(g - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))


@pytest.mark.criterion(6, "Gaussian distances and the chi-square quantile")
class TestGaussianMetrics:
    def test_kl_zero_iff_equal(self):
        rng = np.random.default_rng(1)
        for p in (1, 2, 5):
            a = rng.standard_normal((p, p))
            q1 = GaussianState(rng.standard_normal(p), a @ a.T + np.eye(p))
            q2 = GaussianState(q1.mean + 1e-3, q1.precision)
            assert gaussian_kl(q1, q1) == pytest.approx(0.0, abs=1e-12)
            assert gaussian_kl(q1, q2) > 0

    def test_pinsker(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            q1 = GaussianState([rng.normal()], [[math.exp(rng.normal())]])
            q2 = GaussianState([rng.normal()], [[math.exp(rng.normal())]])
            assert gaussian_tv_1d(q1, q2) <= math.sqrt(gaussian_kl(q1, q2) / 2) + 1e-12

    def test_delta_sandwich(self):
        rng = np.random.default_rng(3)
        checked = 0
        while checked < 100:
            q1 = GaussianState([0.0], [[1.0]])
            q2 = GaussianState([rng.uniform(-0.3, 0.3)], [[math.exp(rng.uniform(-0.3, 0.3))]])
            d = delta_metric(q1, q2)
            if d > 1 / 3:
                continue
            tv = gaussian_tv_1d(q1, q2)
            assert d / 200 <= tv <= d / math.sqrt(2)
            checked += 1

    def test_chi2_quantile(self):
        assert abs(chi2_quantile(2, 0.05) - 5.99146) <= 1e-5
        for p in range(1, 11):
            assert abs(chi2_cdf(chi2_quantile(p, 0.05), p) - 0.95) <= 1e-8


@pytest.mark.criterion(7, "byte-identical outputs across runs and thread counts")
def test_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"experiment": "bernoulli_sec9", "n_total": 200, "replications": 60, '
                   '"batch_sizes": [1, 4, 10, 200], "vb": {"draws": 200}}')
    outs = []
    for i, threads in enumerate(("1", "1", "2")):
        out = tmp_path / f"run{i}"
        assert main(["sec9", "--config", str(cfg), "--out-dir", str(out),
                     "--threads", threads]) == EXIT_OK
        outs.append(out)
    for name in ("coverage.csv", "re_curve.csv", "coverage.svg", "re_curve.svg"):
        blobs = [(o / name).read_bytes() for o in outs]
        assert blobs[0] == blobs[1] == blobs[2], name
