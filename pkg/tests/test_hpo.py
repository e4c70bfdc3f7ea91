import math

import numpy as np
import pytest

from sbcboost import hpo
from sbcboost.cascade import LastStagePolicy, order_classes
from sbcboost.data import class_frequencies
from sbcboost.errors import FoldDegenerate, ValueNotInGrid
from sbcboost.gbt import GbtParams
from sbcboost.hpo import (
    CvConfig,
    HalvingConfig,
    HpGrid,
    cross_validate,
    grid_search,
    halving_grid_search,
    halving_schedule,
    per_stage_search,
    phgs_cascade,
    prune_grid,
)

from conftest import blob_dataset, gaussian_blobs

FAST = GbtParams(num_rounds=5, max_depth=2, seed=0)


class TestCrossValidate:
    def test_perfect_separable(self):
        X, y = gaussian_blobs([60, 60], seed=1)
        score = cross_validate(X, y, FAST, CvConfig(folds=3, seed=0), "binary")
        assert score == pytest.approx(1.0)

    def test_accuracy_metric(self):
        X, y = gaussian_blobs([90, 90], seed=2)
        score = cross_validate(
            X, y, FAST, CvConfig(folds=3, metric="accuracy", seed=0), "binary"
        )
        assert score == pytest.approx(1.0)

    def test_fold_determinism(self):
        X, y = gaussian_blobs([50, 30, 20], scale=4.0, seed=3)
        cv = CvConfig(folds=4, seed=9)
        a = cross_validate(X, y, FAST, cv, "multiclass")
        b = cross_validate(X, y, FAST, cv, "multiclass")
        assert a == b

    def test_degenerate_fold(self):
        X = np.random.default_rng(0).normal(size=(6, 2))
        y = np.array([0, 0, 0, 0, 0, 1])
        with pytest.raises(FoldDegenerate):
            cross_validate(X, y, FAST, CvConfig(folds=3, seed=0), "binary")


class TestGrid:
    def test_ascending_required(self):
        with pytest.raises(ValueError):
            HpGrid.from_mapping({"max_depth": [5, 3]})

    def test_combination_count(self):
        g = HpGrid.from_mapping({"max_depth": [2, 3, 4], "num_rounds": [5, 10]})
        assert g.size() == 6
        assert len(g.combinations()) == 6

    def test_enumeration_order_lexicographic(self):
        g = HpGrid.from_mapping({"num_rounds": [5, 10], "max_depth": [2, 3]})
        combos = g.combinations()
        assert combos[0] == {"max_depth": 2, "num_rounds": 5}
        assert combos[1] == {"max_depth": 2, "num_rounds": 10}

    def test_grid_file(self, tmp_path):
        p = tmp_path / "grid.json"
        p.write_text('{"max_depth": {"values": [2, 4], "prune": "upper_bound"}}')
        g = HpGrid.from_file(str(p))
        assert g.values["max_depth"] == (2, 4)
        assert g.prune["max_depth"] == "upper_bound"


class TestGridSearch:
    def test_single_combination(self):
        X, y = gaussian_blobs([40, 40], seed=4)
        g = HpGrid.from_mapping({"max_depth": [2]})
        res = grid_search(g, X, y, CvConfig(folds=2, seed=0), "binary", base_params=FAST)
        assert len(res.trials) == 1
        assert res.best_params.max_depth == 2

    def test_all_combinations_tried(self):
        X, y = gaussian_blobs([40, 40], seed=5)
        g = HpGrid.from_mapping({"max_depth": [2, 3, 4], "num_rounds": [3, 6]})
        res = grid_search(g, X, y, CvConfig(folds=2, seed=0), "binary", base_params=FAST)
        assert len(res.trials) == 6

    def test_best_matches_external_loop(self):
        X, y = gaussian_blobs([120, 60, 40, 20], scale=4.0, seed=6)
        g = HpGrid.from_mapping({"max_depth": [1, 3], "learning_rate": [0.1, 0.5]})
        cv = CvConfig(folds=3, seed=1)
        res = grid_search(g, X, y, cv, "multiclass", base_params=FAST)
        # oracle: independent re-run per combination
        best_score, best_combo = -1.0, None
        for combo in g.combinations():
            s = cross_validate(
                X, y, hpo._params_from_combo(FAST, combo), cv, "multiclass"
            )
            if s > best_score:
                best_score, best_combo = s, combo
        assert res.best_score == pytest.approx(best_score)
        assert all(getattr(res.best_params, k) == v for k, v in best_combo.items())

    def test_optimality_invariant(self):
        X, y = gaussian_blobs([60, 40], scale=3.0, seed=7)
        g = HpGrid.from_mapping({"max_depth": [1, 2], "num_rounds": [2, 4]})
        res = grid_search(g, X, y, CvConfig(folds=2, seed=0), "binary", base_params=FAST)
        assert all(res.best_score >= t.score for t in res.trials)


class TestHalving:
    def test_schedule_9_factor3(self):
        sched = halving_schedule(9, 10_000, 3, 100)
        assert [n for n, _ in sched] == [9, 3, 1]
        assert [r for _, r in sched] == [100, 300, 900]

    def test_schedule_resource_cap(self):
        sched = halving_schedule(9, 500, 3, 100)
        assert sched == [(9, 100), (3, 300), (1, 500)]

    def test_schedule_terminates_on_full_data(self):
        sched = halving_schedule(20, 150, 2, 100)
        assert sched == [(20, 100), (10, 150)]

    def test_winner_close_to_gs(self):
        X, y = gaussian_blobs([300, 150, 80, 40], scale=5.0, seed=8)
        g = HpGrid.from_mapping({"max_depth": [1, 2, 3], "num_rounds": [3, 6]})
        cv = CvConfig(folds=3, seed=2)
        gs = grid_search(g, X, y, cv, "multiclass", base_params=FAST)
        hgs = halving_grid_search(
            g, X, y, cv, HalvingConfig(factor=3, min_resources=120, seed=2),
            "multiclass", base_params=FAST,
        )
        hgs_full = cross_validate(X, y, hgs.best_params, cv, "multiclass")
        assert gs.best_score - hgs_full <= 0.05

    def test_trials_record_schedule(self):
        X, y = gaussian_blobs([200, 200], seed=9)
        g = HpGrid.from_mapping({"max_depth": [1, 2, 3, 4]})
        hc = HalvingConfig(factor=2, min_resources=80, seed=0)
        res = halving_grid_search(g, X, y, CvConfig(folds=2, seed=0), hc, "binary", base_params=FAST)
        resources = [t.resources for t in res.trials]
        assert resources[:4] == [80] * 4
        assert resources[4:6] == [160] * 2
        assert resources[6] == 320

    def test_determinism(self):
        X, y = gaussian_blobs([150, 80], scale=3.0, seed=10)
        g = HpGrid.from_mapping({"max_depth": [1, 2, 3]})
        hc = HalvingConfig(factor=2, min_resources=60, seed=5)
        cv = CvConfig(folds=2, seed=5)
        a = halving_grid_search(g, X, y, cv, hc, "binary", base_params=FAST)
        b = halving_grid_search(g, X, y, cv, hc, "binary", base_params=FAST)
        assert a.best_params == b.best_params
        assert [t.score for t in a.trials] == [t.score for t in b.trials]


class TestPrune:
    GRID = HpGrid.from_mapping({
        "max_depth": {"values": [3, 5, 7, 9], "prune": "upper_bound"},
        "num_rounds": {"values": [50, 100, 200], "prune": "upper_bound"},
        "min_child_weight": {"values": [1.0, 5.0], "prune": "lower_bound"},
        "learning_rate": {"values": [0.1, 0.3], "prune": "unpruned"},
    })

    def test_upper_bound(self):
        best = GbtParams(max_depth=5, num_rounds=50, min_child_weight=1.0, learning_rate=0.1)
        pruned = prune_grid(self.GRID, best)
        assert pruned.values["max_depth"] == (3, 5)
        assert pruned.values["num_rounds"] == (50,)

    def test_lower_bound_and_unpruned(self):
        best = GbtParams(max_depth=3, num_rounds=50, min_child_weight=5.0, learning_rate=0.3)
        pruned = prune_grid(self.GRID, best)
        assert pruned.values["min_child_weight"] == (5.0,)
        assert pruned.values["learning_rate"] == (0.1, 0.3)

    def test_best_always_survives(self):
        best = GbtParams(max_depth=9, num_rounds=200, min_child_weight=1.0, learning_rate=0.1)
        pruned = prune_grid(self.GRID, best)
        for name in pruned.values:
            assert getattr(best, name) in pruned.values[name]

    def test_value_not_in_grid(self):
        with pytest.raises(ValueNotInGrid):
            prune_grid(self.GRID, GbtParams(max_depth=4))

    def test_subset_property(self):
        best = GbtParams(max_depth=7, num_rounds=100, min_child_weight=5.0, learning_rate=0.1)
        pruned = prune_grid(self.GRID, best)
        for name, vals in pruned.values.items():
            assert set(vals) <= set(self.GRID.values[name])


class TestPhgs:
    def _setup(self):
        d = blob_dataset([600, 150, 60, 25], scale=1.0, seed=11)
        o = order_classes(class_frequencies(d))
        grid = HpGrid.from_mapping({
            "max_depth": {"values": [1, 2, 3], "prune": "upper_bound"},
            "num_rounds": {"values": [3, 6], "prune": "upper_bound"},
        })
        cv = CvConfig(folds=3, seed=0)
        hc = HalvingConfig(factor=2, min_resources=60, seed=0)
        return d, o, grid, cv, hc

    def test_stage_grids_shrink(self):
        d, o, grid, cv, hc = self._setup()
        model, results = phgs_cascade(d, o, grid, cv, hc, base_params=FAST)
        assert len(model.stages) == 4
        assert len(results) == 4
        # each stage's grid is a subset of the previous: trial param values
        # never exceed the previous stage's best for upper-bounded params
        for prev, cur in zip(results, results[1:]):
            for t in cur.trials:
                assert t.params["max_depth"] <= prev.best_params.max_depth
                assert t.params["num_rounds"] <= prev.best_params.num_rounds

    def test_fewer_trials_than_unpruned(self):
        d, o, grid, cv, hc = self._setup()
        _, pruned_results = phgs_cascade(d, o, grid, cv, hc, base_params=FAST)
        _, plain_results = per_stage_search(d, o, grid, cv, "hgs", hc, base_params=FAST)
        n_pruned = sum(len(r.trials) for r in pruned_results)
        n_plain = sum(len(r.trials) for r in plain_results)
        interior = any(
            r.best_params.max_depth < 3 or r.best_params.num_rounds < 6
            for r in pruned_results[:-1]
        )
        if interior:
            assert n_pruned < n_plain

    def test_per_stage_gs(self):
        d, o, grid, cv, hc = self._setup()
        model, results = per_stage_search(d, o, grid, cv, "gs", None, base_params=FAST)
        assert all(len(r.trials) == 6 for r in results)
        assert len(model.stages) == 4
