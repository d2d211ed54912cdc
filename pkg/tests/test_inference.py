"""Weighted bootstrap: weight law, robust variance, failures, sup tests."""

import csv

import numpy as np
import pytest
from scipy.special import ndtr

from qrsdecomp import copulas, counterfactual as cf, inference
from qrsdecomp.copulas import CopulaSpec
from qrsdecomp.counterfactual import CfStat
from qrsdecomp.data import from_arrays
from qrsdecomp.errors import (BootstrapFailureError, ConfigError,
                              DegenerateTestError, DomainError,
                              InsufficientDrawsError)
from qrsdecomp.inference import (BootstrapConfig, bootstrap_run, draw_weights,
                                 iqr_variance, ks_test, replication_rng,
                                 stat_id, summarize)
from qrsdecomp.pipeline import QrsConfig, TauGrid

STATS = [CfStat(cf.MEAN_PARTICIPANTS), CfStat(cf.QUANTILE_PARTICIPANTS, 0.5)]
CFG = QrsConfig(tau_grid=TauGrid(0.1, 0.1),
                copula_family=copulas.INDEPENDENCE)


def make_two_group_data(n=300, seed=0):
    rng = np.random.default_rng(seed)
    z1 = rng.normal(size=n)
    x1 = rng.uniform(-1, 1, size=n)
    d = (rng.uniform(size=n) < 0.5).astype(int)
    pi = ndtr(0.4 + 0.7 * z1)
    s = (rng.uniform(size=n) < pi).astype(int)
    y = np.where(s == 1, 1.0 + 0.5 * x1 + rng.normal(size=n), np.nan)
    return from_arrays(y, s, d, z1, x1)


class TestWeights:
    def test_law_of_large_numbers(self):
        rng = np.random.default_rng(1)
        w = draw_weights(1_000_000, rng)
        assert abs(np.mean(w) - 1.0) < 0.01
        assert abs(np.var(w) - 1.0) < 0.02
        assert np.all(w > 0)

    def test_unit_law_is_degenerate(self):
        rng = np.random.default_rng(2)
        np.testing.assert_array_equal(
            draw_weights(10, rng, inference.UNIT_WEIGHTS), np.ones(10))

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            draw_weights(0, np.random.default_rng(3))

    def test_replication_streams_independent_of_order(self):
        a = replication_rng(7, 3).exponential(size=5)
        _ = replication_rng(7, 4).exponential(size=5)
        b = replication_rng(7, 3).exponential(size=5)
        np.testing.assert_array_equal(a, b)


class TestIqrVariance:
    def test_matches_normal_variance(self):
        rng = np.random.default_rng(4)
        draws = rng.normal(3.0, 2.0, size=200_000)
        assert iqr_variance(draws) == pytest.approx(4.0, rel=0.02)

    def test_shift_invariant_and_scale_quadratic(self):
        rng = np.random.default_rng(5)
        draws = rng.normal(size=500)
        v = iqr_variance(draws)
        assert iqr_variance(draws + 100.0) == pytest.approx(v, rel=1e-9)
        assert iqr_variance(3.0 * draws) == pytest.approx(9.0 * v, rel=1e-9)

    def test_robust_to_outlier_draws(self):
        rng = np.random.default_rng(6)
        draws = rng.normal(size=400)
        spoiled = draws.copy()
        spoiled[:8] = 1e6
        assert iqr_variance(spoiled) < 2.0 * iqr_variance(draws)

    def test_too_few_draws(self):
        with pytest.raises(InsufficientDrawsError):
            iqr_variance([1.0, 2.0, 3.0])


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            BootstrapConfig(replications=1)
        with pytest.raises(ConfigError):
            BootstrapConfig(weight_law="gaussian")

    def test_stat_id(self):
        assert stat_id(CfStat(cf.MEAN_PARTICIPANTS)) == "mean_participants"
        assert stat_id(CfStat(cf.QUANTILE_POPULATION, 0.25)) == \
            "quantile_population@0.25"


class TestBootstrapRun:
    def test_unit_weight_draws_equal_point(self):
        ds = make_two_group_data()
        boot = BootstrapConfig(replications=4,
                               weight_law=inference.UNIT_WEIGHTS, seed=0)
        res = bootstrap_run(ds, CFG, boot, STATS)
        for sid, d in res.draws.items():
            point = res.point[sid]
            expect = [point.total, *point.components.values()]
            for row in d.values:
                np.testing.assert_array_equal(row, expect)

    def test_deterministic_and_shapes(self):
        ds = make_two_group_data()
        boot = BootstrapConfig(replications=6, seed=11)
        r1 = bootstrap_run(ds, CFG, boot, STATS)
        r2 = bootstrap_run(ds, CFG, boot, STATS)
        for sid in r1.draws:
            np.testing.assert_array_equal(r1.draws[sid].values,
                                          r2.draws[sid].values)
            assert r1.draws[sid].values.shape == (6, 5)
            assert r1.draws[sid].labels == ("total", "EC", "CC", "SC", "PC")
        assert not r1.failures

    def test_parallel_matches_serial(self):
        ds = make_two_group_data()
        boot = BootstrapConfig(replications=4, seed=12)
        serial = bootstrap_run(ds, CFG, boot, STATS, workers=1)
        parallel = bootstrap_run(ds, CFG, boot, STATS, workers=2)
        for sid in serial.draws:
            np.testing.assert_array_equal(serial.draws[sid].values,
                                          parallel.draws[sid].values)

    def test_draws_csv_written(self, tmp_path):
        ds = make_two_group_data()
        boot = BootstrapConfig(replications=4, seed=13)
        path = tmp_path / "draws.csv"
        res = bootstrap_run(ds, CFG, boot, STATS, draws_path=path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["replication", "statistic", "component", "value"]
        assert len(rows) == 1 + 4 * len(STATS) * 5
        sid = stat_id(STATS[0])
        first = next(r for r in rows[1:] if r[1] == sid and r[2] == "total")
        assert float(first[3]) == res.draws[sid].values[0, 0]

    def test_few_failures_tolerated(self, monkeypatch):
        ds = make_two_group_data()
        real = inference._one_replication

        def flaky(args):
            if args[-1] == 0:
                raise DomainError("synthetic failure")
            return real(args)

        monkeypatch.setattr(inference, "_one_replication", flaky)
        boot = BootstrapConfig(replications=20, seed=14)
        res = bootstrap_run(ds, CFG, boot, STATS)
        assert len(res.failures) == 1
        assert res.failures[0][0] == 0
        assert "synthetic failure" in res.failures[0][1]
        for d in res.draws.values():
            assert d.values.shape[0] == 19

    def test_many_failures_abort(self, monkeypatch):
        ds = make_two_group_data()
        real = inference._one_replication

        def flaky(args):
            if args[-1] < 3:
                raise DomainError("synthetic failure")
            return real(args)

        monkeypatch.setattr(inference, "_one_replication", flaky)
        boot = BootstrapConfig(replications=20, seed=15)
        with pytest.raises(BootstrapFailureError):
            bootstrap_run(ds, CFG, boot, STATS)

    def test_summary_attaches_positive_ses(self):
        ds = make_two_group_data()
        boot = BootstrapConfig(replications=24, seed=16)
        res = bootstrap_run(ds, CFG, boot, STATS)
        table = summarize(res)
        for sid, dec in table.items():
            assert dec.se["total"] > 0.0
            assert set(dec.significance) == {"total", "EC", "CC", "SC", "PC"}


class TestKsTest:
    def test_zero_statistic_when_hypothesis_holds(self):
        rng = np.random.default_rng(20)
        point = np.array([0.1, 0.2, 0.3])
        draws = point + rng.normal(scale=0.01, size=(100, 3))
        res = ks_test(draws, point, point, n=500)
        assert res.statistic == 0.0
        assert not any(res.rejected.values())

    def test_rejects_large_shift(self):
        rng = np.random.default_rng(21)
        point = np.zeros(4)
        draws = rng.normal(scale=0.01, size=(200, 4))
        hypo = np.full(4, 0.1)  # ten bootstrap SDs away
        res = ks_test(draws, point, hypo, n=500)
        assert all(res.rejected.values())

    def test_zero_variance_points_dropped(self):
        rng = np.random.default_rng(22)
        draws = np.column_stack([np.full(50, 0.3),
                                 rng.normal(scale=0.01, size=50)])
        res = ks_test(draws, [0.3, 0.0], [0.3, 0.0], n=100)
        assert res.dropped == (0,)

    def test_all_degenerate_rejected(self):
        draws = np.full((50, 3), 0.5)
        with pytest.raises(DegenerateTestError):
            ks_test(draws, [0.5] * 3, [0.5] * 3, n=100)

    def test_misaligned_grids_rejected(self):
        with pytest.raises(DomainError):
            ks_test(np.ones((10, 3)), [1.0, 2.0], [1.0, 2.0], n=50)
