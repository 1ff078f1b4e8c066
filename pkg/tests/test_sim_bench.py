import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from mfm_nhpp.geo_ingest import bin_counts
from mfm_nhpp.sim_bench import (
    FitSettings,
    ReplicateResult,
    ScenarioSpec,
    aggregate,
    generate_counts,
    make_layout,
    replicate_seed,
    run_replicates,
)

QUICK = FitSettings(total_iters=300, burnin=100)


class TestLayouts:
    def test_bands(self):
        lay = make_layout("bands-3", 20)
        assert set(np.unique(lay)) == {1, 2, 3}
        # vertical bands: constant down each column
        assert np.all(lay == lay[0])
        assert np.bincount(lay.ravel())[1:].tolist() == [140, 140, 120]

    def test_blocks(self):
        lay = make_layout("blocks-6", 20)
        assert set(np.unique(lay)) == set(range(1, 7))
        assert np.all(np.bincount(lay.ravel())[1:] > 0)

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_layout("spiral", 4)


class TestScenarioSpec:
    def test_named(self):
        s = ScenarioSpec.named(1)
        assert s.K == 3 and s.true_lambdas == (0.2, 10.0, 20.0) and s.truth.shape == (400,)
        assert ScenarioSpec.named(2).K == 6

    def test_zero_intensity_forbidden(self):
        with pytest.raises(ValueError):
            ScenarioSpec(1, (0.0,), [[1]])

    def test_every_label_used(self):
        with pytest.raises(ValueError):
            ScenarioSpec(2, (1.0, 2.0, 3.0), [[1, 1], [2, 2]])


class TestGenerate:
    def test_scenario1_low_cluster_mostly_zero(self):
        spec = ScenarioSpec.named(1)
        grid, truth = generate_counts(spec, np.random.default_rng(0))
        low = grid.counts[truth == 1]
        assert np.mean(low == 0) > 0.7
        assert grid.n == 400

    def test_homogeneous(self):
        spec = ScenarioSpec(2, (5.0,), np.ones((2, 2)))
        grid, truth = generate_counts(spec, np.random.default_rng(1))
        assert grid.counts.shape == (4,) and np.all(truth == 1)

    def test_points_bin_back(self):
        spec = ScenarioSpec.named(2, resolution=10)
        grid, _, pts = generate_counts(spec, np.random.default_rng(2), with_points=True)
        np.testing.assert_array_equal(bin_counts(pts, 10).counts, grid.counts)

    def test_law_of_large_numbers(self):
        spec = ScenarioSpec.named(1)
        rng = np.random.default_rng(3)
        R = 10_000
        total = np.zeros(400)
        for _ in range(R):
            total += generate_counts(spec, rng)[0].counts
        for j, lam in enumerate(spec.true_lambdas, start=1):
            cells = spec.truth == j
            mean = total[cells].sum() / (R * cells.sum())
            sigma = np.sqrt(lam / (R * cells.sum()))
            assert abs(mean - lam) < 3 * sigma


def _result(index, k, lambdas, ri=1.0):
    return ReplicateResult(index=index, seed=index, k_dahl=k, k_mode=k, rand_index=ri,
                           dahl_lambdas=list(lambdas), mean_lambdas=list(lambdas),
                           mae_mean=0.0, mae_dahl=0.0)


class TestAggregate:
    def test_single_replicate(self):
        spec = ScenarioSpec.named(1)
        s = aggregate(spec, [_result(0, 3, [0.3, 9.0, 21.0])])
        assert s.k_recovery_rate == 1.0
        rows = s.per_cluster_dahl
        assert [r["sd"] for r in rows] == [0.0, 0.0, 0.0]
        assert rows[1]["bias"] == pytest.approx(-1.0)
        assert rows[1]["mse"] == pytest.approx(1.0)

    def test_mse_identity(self):
        spec = ScenarioSpec.named(1)
        rng = np.random.default_rng(0)
        results = [_result(j, 3, np.sort(rng.gamma(2, 5, 3))) for j in range(7)]
        results.append(_result(7, 2, [1.0, 2.0], ri=0.5))
        s = aggregate(spec, results)
        assert s.k_recovery_rate == pytest.approx(7 / 8)
        assert s.k_histogram == {2: 1, 3: 7}
        R = 7
        for row in s.per_cluster_dahl + s.per_cluster_mean:
            assert row["mse"] == pytest.approx(row["bias"] ** 2 + row["sd"] ** 2 * (R - 1) / R, abs=1e-9)
            assert row["mse"] >= row["bias"] ** 2 - 1e-12

    def test_nothing_recovered(self):
        s = aggregate(ScenarioSpec.named(1), [_result(0, 2, [1.0, 2.0])])
        assert s.k_recovery_rate == 0.0 and s.per_cluster_dahl[0]["bias"] is None


class TestReplicates:
    def test_seed_derivation(self):
        assert replicate_seed(0, 0) != replicate_seed(0, 1)
        assert replicate_seed(5, 3) == replicate_seed(5, 3)

    def test_workers_do_not_change_results(self, tmp_path):
        spec = ScenarioSpec.named(1, resolution=6, seed=9)
        a = run_replicates(spec, 3, QUICK, workers=1)
        b = run_replicates(spec, 3, QUICK, workers=2)
        assert a.to_json() == b.to_json()
        a.write_replicates_csv(tmp_path / "a.csv")
        b.write_replicates_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_single_replicate_smoke(self, tmp_path):
        spec = ScenarioSpec.named(1, resolution=8, seed=1)
        s = run_replicates(spec, 1, QUICK)
        assert s.n_replicates == 1 and 0 <= s.mean_rand_index <= 1
        d = json.loads(s.to_json())
        assert d["K"] == 3 and "replicates" not in d
        s.write_replicates_csv(tmp_path / "r.csv")
        with open(tmp_path / "r.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1 and rows[0]["replicate"] == "0"

    def test_needs_a_replicate(self):
        with pytest.raises(ValueError):
            run_replicates(ScenarioSpec.named(1), 0, QUICK)

    def test_scenario_seed_changes_data(self):
        a = run_replicates(ScenarioSpec.named(1, resolution=6, seed=1), 1, QUICK)
        b = run_replicates(replace(ScenarioSpec.named(1, resolution=6), seed=2), 1, QUICK)
        assert a.replicates[0].seed != b.replicates[0].seed
