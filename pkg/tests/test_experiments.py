import json
import os

import numpy as np
import pytest

from online_bvm import ConfigError, MalformedCsv
from online_bvm.experiments.config import config_from_dict, load_config
from online_bvm.experiments.data import (gen_bernoulli, gen_gaussian_linear, gen_intercept,
                                         gen_logistic_gaussian)
from online_bvm.experiments.diagnose import run_diagnose
from online_bvm.experiments.io import fmt, read_csv, write_csv
from online_bvm.experiments.plots import emit_svg
from online_bvm.experiments.scaling import loglog_slope, run_logistic_scaling
from online_bvm.experiments.sec9 import (batch_sums, run_sec9, sec9_vb_config, vb_generic,
                                         vb_replication)
from online_bvm.rng import stream


class TestStreams:
    def test_keys_separate_streams(self):
        a = stream(1, 0, "data").random(4)
        assert np.array_equal(a, stream(1, 0, "data").random(4))
        assert not np.array_equal(a, stream(1, 1, "data").random(4))
        assert not np.array_equal(a, stream(1, 0, "vb").random(4))
        assert not np.array_equal(a, stream(2, 0, "data").random(4))

    def test_generators(self):
        y = gen_bernoulli(1000, 5, 3).responses
        assert set(np.unique(y)) <= {0.0, 1.0} and abs(y.mean() - 0.5) < 0.06
        assert np.array_equal(y, gen_intercept(1000, 0.0, 5, 3).responses)
        assert gen_intercept(2000, 2.0, 5, 3).responses.mean() > 0.8
        b = gen_logistic_gaussian(50, 3, [1, 0, -1], 5)
        assert b.design.shape == (50, 3)
        g = gen_gaussian_linear(500, 2, [1.0, -1.0], 4.0, 5)
        resid = g.responses - g.design @ [1.0, -1.0]
        assert abs(resid.std() - 0.5) < 0.05


class TestConfig:
    def test_defaults(self):
        cfg = config_from_dict({})
        assert cfg.batch_sizes == (1, 2, 4, 6, 8, 10, 20, 50, 200, 1000)
        assert cfg.replications == 500 and cfg.alpha == 0.05 and cfg.prior_sd == 3.0

    @pytest.mark.parametrize("raw", [
        {"experiment": "nope"}, {"batch_sizes": [0]}, {"batch_sizes": [2000]},
        {"batch_sizes": [2, 2]}, {"replications": 0}, {"alpha": 1.0}, {"prior_sd": -1},
        {"threads": 0}, {"methods": ["mcmc"]}, {"vb": {"draws": 0}}, {"vb": {"nope": 1}},
        {"unknown_key": 1}, {"model": "probit"},
    ])
    def test_rejects(self, raw):
        with pytest.raises(ConfigError):
            config_from_dict(raw)

    def test_load_and_override(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"experiment": "bernoulli_sec9", "replications": 7}))
        cfg = load_config(p, seed=3, threads=None)
        assert (cfg.replications, cfg.seed, cfg.threads) == (7, 3, 1)
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_theta0_broadcast(self):
        cfg = config_from_dict({"dim": 3, "theta0": 0.5})
        assert cfg.theta0_vector() == (0.5, 0.5, 0.5)
        with pytest.raises(ConfigError):
            config_from_dict({"dim": 3, "theta0": [1, 2]}).theta0_vector()


class TestIo:
    def test_fmt(self):
        assert fmt(0.1 + 0.2) == "0.3"
        assert fmt(1 / 3) == "0.333333333333"
        assert fmt(np.int64(7)) == "7" and fmt("mle") == "mle"

    def test_csv_roundtrip(self, tmp_path):
        p = tmp_path / "t.csv"
        write_csv(p, ["a", "b"], [("x", 1.5), ("y", 2)])
        assert p.read_bytes() == b"a,b\r\nx,1.5\r\ny,2\r\n"
        assert read_csv(p) == (["a", "b"], [["x", "1.5"], ["y", "2"]])

    def test_malformed(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a,b\n1\n")
        with pytest.raises(MalformedCsv):
            read_csv(p)


class TestCoinKernel:
    def test_batch_sums_with_remainder(self):
        sums, sizes = batch_sums(np.array([1.0, 0, 1, 1, 0, 1, 1]), 3)
        assert sums.tolist() == [2, 2, 1] and sizes.tolist() == [3, 3, 1]

    @pytest.mark.parametrize("n", [1, 7, 50])
    def test_kernel_matches_engine(self, n):
        cfg = config_from_dict({"n_total": 100, "replications": 1, "batch_sizes": [n]})
        vbcfg = sec9_vb_config(cfg).updated(draws=200)
        y = gen_bernoulli(100, cfg.seed, 0).responses
        sums, sizes = batch_sums(y, n)
        path, prec = vb_replication(sums, sizes, cfg.seed, 0, n, vbcfg, 0.0, 3.0)
        recs = vb_generic(y, n, 0, cfg, vbcfg)
        np.testing.assert_allclose(path, [r.posterior.mean[0] for r in recs], atol=1e-10)
        assert prec == pytest.approx(recs[-1].posterior.precision[0, 0], rel=1e-10)

    def test_small_run(self, tmp_path):
        cfg = config_from_dict({"n_total": 100, "replications": 20, "batch_sizes": [1, 10, 100],
                                "out_dir": str(tmp_path), "vb": {"draws": 100}})
        res = run_sec9(cfg)
        assert [r[0] for r in res.coverage] == ["mle", "online_vb", "online_vb", "online_vb"]
        for _, _, cp, se, length in res.coverage:
            assert 0 <= cp <= 1 and se >= 0 and length > 0
        assert {r[0] for r in res.re_curve} == {1, 10, 100}
        for name in ("coverage.csv", "re_curve.csv", "coverage.svg", "re_curve.svg"):
            assert os.path.getsize(tmp_path / name) > 0


class TestScaling:
    def test_small_run(self, tmp_path):
        cfg = config_from_dict({"experiment": "logistic_gaussian", "n_total": 128,
                                "batch_sizes": [16, 64], "replications": 3, "dim": 1,
                                "methods": ["laplace"], "out_dir": str(tmp_path)})
        rows, records = run_logistic_scaling(cfg)
        control = [r for r in rows if r[0] == "gaussian_linear" and r[2] == "laplace_full"]
        assert control and all(r[6] <= 1e-7 for r in control)
        header, body = read_csv(tmp_path / "tv_scaling.csv")
        assert header[:4] == ["model", "method", "baseline", "n"] and len(body) == len(rows)
        lines = (tmp_path / "diagnostics.jsonl").read_text().splitlines()
        assert len(lines) == len(records)
        assert (tmp_path / "tv_scaling.svg").exists()

    def test_slope(self):
        ns = np.array([16, 32, 64, 128])
        assert loglog_slope(ns, 3.0 * ns**-0.5) == pytest.approx(-0.5)


class TestDiagnose:
    def test_csv_input(self, tmp_path):
        y = gen_logistic_gaussian(60, 2, [0.5, -0.5], 1)
        p = tmp_path / "d.csv"
        write_csv(p, ["y", "x1", "x2"], [(yy, *xx) for yy, xx in zip(y.responses, y.design)])
        cfg = config_from_dict({"experiment": "diagnose", "data": str(p), "batch_sizes": [20],
                                "methods": ["laplace"], "out_dir": str(tmp_path / "out")})
        steps = run_diagnose(cfg)
        assert [s["t"] for s in steps] == [1, 2, 3]
        assert steps[-1]["rho"] >= 0 and steps[0]["rho"] == 0.0
        assert (tmp_path / "out" / "updates.jsonl").exists()
        assert len((tmp_path / "out" / "diagnostics.jsonl").read_text().splitlines()) == 3

    def test_needs_data(self):
        with pytest.raises(ConfigError):
            run_diagnose(config_from_dict({"experiment": "diagnose"}), write=False)


class TestPlots:
    def _table(self, tmp_path):
        p = tmp_path / "re_curve.csv"
        write_csv(p, ["n", "t", "re"], [(1, t, 1 + 1 / t) for t in range(1, 6)]
                  + [(5, t, 1.0) for t in range(1, 3)])
        return p

    def test_byte_deterministic(self, tmp_path):
        p = self._table(tmp_path)
        a = open(emit_svg(p, "re_curve"), "rb").read()
        b = open(emit_svg(p, "re_curve", tmp_path / "again.svg"), "rb").read()
        assert a == b
        text = a.decode()
        assert 'id="series-1"' in text and 'id="series-2"' in text
        assert 'id="series-3"' not in text

    @pytest.mark.parametrize("text", ["", "n,t,re\n", "a,b\n1,2\n", "n,t,re\n1,x,2\n"])
    def test_malformed(self, tmp_path, text):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        with pytest.raises(MalformedCsv):
            emit_svg(p, "re_curve")
