"""Hyperparameter search: k-fold grid search, successive halving, and the
pruned per-stage variant for cascades.

Candidates are enumerated lexicographically over parameter name, then
value index; ties in score always resolve to the earlier candidate, so
every search is deterministic given its seeds.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import cascade as casc
from . import gbt
from .data import Dataset, compute_sample_weights
from .errors import FoldDegenerate, SingleClassInput, StageError, ValueNotInGrid
from .gbt import GbtParams
from .metrics import accuracy_score, macro_f1

PRUNE_DIRECTIONS = ("upper_bound", "lower_bound", "unpruned")

# directions applied when a grid file doesn't name one
DEFAULT_PRUNE = {
    "max_depth": "upper_bound",
    "num_rounds": "upper_bound",
    "min_child_weight": "lower_bound",
    "learning_rate": "unpruned",
    "l2_lambda": "unpruned",
    "subsample": "unpruned",
}


@dataclass(frozen=True)
class HpGrid:
    """Per parameter: ascending candidate values and a pruning direction."""

    values: dict[str, tuple]
    prune: dict[str, str]

    def __post_init__(self):
        for name, vals in self.values.items():
            if not vals:
                raise ValueError(f"empty candidate list for {name!r}")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"candidates for {name!r} must be strictly ascending")
            if self.prune.get(name, "unpruned") not in PRUNE_DIRECTIONS:
                raise ValueError(f"bad prune direction for {name!r}")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "HpGrid":
        values = {}
        prune = {}
        for name, spec in mapping.items():
            if isinstance(spec, dict):
                values[name] = tuple(spec["values"])
                prune[name] = spec.get("prune", DEFAULT_PRUNE.get(name, "unpruned"))
            else:
                values[name] = tuple(spec)
                prune[name] = DEFAULT_PRUNE.get(name, "unpruned")
        return cls(values, prune)

    @classmethod
    def from_file(cls, path: str) -> "HpGrid":
        with open(path, encoding="utf-8") as fh:
            return cls.from_mapping(json.load(fh))

    def combinations(self) -> list[dict]:
        names = sorted(self.values)
        out = []
        for combo in itertools.product(*(self.values[n] for n in names)):
            out.append(dict(zip(names, combo)))
        return out

    def size(self) -> int:
        return math.prod(len(v) for v in self.values.values())


@dataclass(frozen=True)
class CvConfig:
    folds: int = 3
    metric: str = "macro_f1"        # macro_f1 | accuracy
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.metric not in ("macro_f1", "accuracy"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass(frozen=True)
class HalvingConfig:
    factor: int = 3
    min_resources: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.factor < 2:
            raise ValueError("factor must be >= 2")
        if self.min_resources < 1:
            raise ValueError("min_resources must be >= 1")


@dataclass
class Trial:
    params: dict
    resources: int
    score: float
    seconds: float


@dataclass
class HpoResult:
    best_params: GbtParams
    best_score: float
    trials: list[Trial]
    wall_clock: float

    def export_trials(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.trials:
                fh.write(json.dumps({
                    "params": t.params,
                    "resources": t.resources,
                    "score": t.score,
                    "seconds": t.seconds,
                }) + "\n")


def _kfold_indices(y: np.ndarray, cv: CvConfig) -> list[np.ndarray]:
    """Deterministic (optionally stratified) fold membership for each row."""
    rng = np.random.default_rng(cv.seed)
    n = y.size
    fold_of = np.empty(n, dtype=np.int64)
    if cv.stratified:
        for c in np.unique(y):
            idx = np.flatnonzero(y == c)
            idx = idx[rng.permutation(idx.size)]
            fold_of[idx] = np.arange(idx.size) % cv.folds
    else:
        fold_of[rng.permutation(n)] = np.arange(n) % cv.folds
    return [np.flatnonzero(fold_of == f) for f in range(cv.folds)]


def cross_validate(
    X: np.ndarray,
    y: np.ndarray,
    params: GbtParams,
    cv: CvConfig,
    objective: str = "binary",
    weights_mode: str = "none",
) -> float:
    """Mean held-out metric across folds; folds fixed by the cv seed."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_classes = int(y.max()) + 1
    folds = _kfold_indices(y, cv)
    scores = []
    for f, val_idx in enumerate(folds):
        if np.unique(y[val_idx]).size < 2:
            raise FoldDegenerate(f, "validation part has a single class")
        mask = np.ones(y.size, dtype=bool)
        mask[val_idx] = False
        tr_idx = np.flatnonzero(mask)
        y_tr = y[tr_idx]
        w = compute_sample_weights(
            y_tr, "inverse_frequency" if weights_mode != "none" else "none"
        )
        try:
            if objective == "binary":
                model = gbt.train_binary(X[tr_idx], y_tr, w, params)
            else:
                model = gbt.train_multiclass(X[tr_idx], y_tr, w, params)
        except SingleClassInput as exc:
            raise FoldDegenerate(f, str(exc)) from exc
        pred = model.predict_class(X[val_idx])
        if cv.metric == "accuracy":
            scores.append(accuracy_score(y[val_idx], pred))
        else:
            scores.append(macro_f1(y[val_idx], pred, n_classes, present_only=True))
    return float(np.mean(scores))


def _params_from_combo(base: GbtParams, combo: dict) -> GbtParams:
    return replace(base, **combo)


def grid_search(
    grid: HpGrid,
    X: np.ndarray,
    y: np.ndarray,
    cv: CvConfig,
    objective: str = "binary",
    weights_mode: str = "none",
    base_params: GbtParams = GbtParams(),
) -> HpoResult:
    """Exhaustive search: every combination scored on the full data."""
    t_start = time.perf_counter()
    trials = []
    best = None  # (score, index)
    combos = grid.combinations()
    for i, combo in enumerate(combos):
        params = _params_from_combo(base_params, combo)
        t0 = time.perf_counter()
        score = cross_validate(X, y, params, cv, objective, weights_mode)
        trials.append(Trial(combo, int(y.size), score, time.perf_counter() - t0))
        if best is None or score > best[0]:
            best = (score, i)
    return HpoResult(
        best_params=_params_from_combo(base_params, combos[best[1]]),
        best_score=best[0],
        trials=trials,
        wall_clock=time.perf_counter() - t_start,
    )


def halving_schedule(n_candidates: int, n_rows: int, factor: int, min_resources: int) -> list[tuple[int, int]]:
    """(candidate count, row budget) per iteration.

    Survivors shrink by ceil(n/factor); resources multiply by factor until
    capped at the full row count. Stops once a single candidate remains or
    the cap is reached (that iteration decides the winner).
    """
    schedule = []
    n = n_candidates
    r = min(min_resources, n_rows)
    while True:
        schedule.append((n, r))
        if n == 1 or r >= n_rows:
            break
        n = math.ceil(n / factor)
        r = min(r * factor, n_rows)
    return schedule


def _stratified_subsample(y: np.ndarray, size: int, folds: int, rng) -> np.ndarray:
    """Roughly proportional subsample keeping >= min(count, folds) rows per
    class so every CV fold can still see every class."""
    n = y.size
    if size >= n:
        return np.arange(n)
    idx_parts = []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        quota = int(round(size * idx.size / n))
        quota = max(quota, min(idx.size, folds))
        quota = min(quota, idx.size)
        perm = rng.permutation(idx.size)
        idx_parts.append(idx[perm[:quota]])
    return np.sort(np.concatenate(idx_parts))


def halving_grid_search(
    grid: HpGrid,
    X: np.ndarray,
    y: np.ndarray,
    cv: CvConfig,
    hc: HalvingConfig,
    objective: str = "binary",
    weights_mode: str = "none",
    base_params: GbtParams = GbtParams(),
) -> HpoResult:
    """Successive halving over the grid's combinations."""
    t_start = time.perf_counter()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    combos = grid.combinations()
    schedule = halving_schedule(len(combos), y.size, hc.factor, hc.min_resources)

    trials = []
    survivors = list(range(len(combos)))
    last_scores: dict[int, float] = {}
    for it, (n_cand, resources) in enumerate(schedule):
        assert len(survivors) == n_cand
        rng = np.random.default_rng(hc.seed + it)
        sub = _stratified_subsample(y, resources, cv.folds, rng)
        scores = []
        for ci in survivors:
            params = _params_from_combo(base_params, combos[ci])
            t0 = time.perf_counter()
            score = cross_validate(X[sub], y[sub], params, cv, objective, weights_mode)
            trials.append(Trial(combos[ci], int(resources), score, time.perf_counter() - t0))
            scores.append(score)
        last_scores = dict(zip(survivors, scores))
        if it < len(schedule) - 1:
            keep = math.ceil(n_cand / hc.factor)
            # stable sort: equal scores keep enumeration order
            order = sorted(range(len(survivors)), key=lambda j: -scores[j])
            survivors = sorted(survivors[j] for j in order[:keep])

    winner = max(survivors, key=lambda ci: (last_scores[ci], -ci))
    best_score = last_scores[winner]
    if schedule[-1][1] < y.size:
        # single survivor found before the budget reached full data:
        # re-score it there so best_score is comparable with grid_search
        params = _params_from_combo(base_params, combos[winner])
        t0 = time.perf_counter()
        best_score = cross_validate(X, y, params, cv, objective, weights_mode)
        trials.append(Trial(combos[winner], int(y.size), best_score, time.perf_counter() - t0))
    return HpoResult(
        best_params=_params_from_combo(base_params, combos[winner]),
        best_score=best_score,
        trials=trials,
        wall_clock=time.perf_counter() - t_start,
    )


def prune_grid(grid: HpGrid, best_prev: GbtParams) -> HpGrid:
    """Shrink each bounded parameter's list around the previous stage's best.

    upper_bound keeps candidates <= the best value, lower_bound keeps >=;
    the best value itself always survives, so the result is never empty.
    """
    values = {}
    for name, vals in grid.values.items():
        best = getattr(best_prev, name)
        if best not in vals:
            raise ValueNotInGrid(f"{name}={best!r} not among candidates {vals}")
        direction = grid.prune.get(name, "unpruned")
        if direction == "upper_bound":
            values[name] = tuple(v for v in vals if v <= best)
        elif direction == "lower_bound":
            values[name] = tuple(v for v in vals if v >= best)
        else:
            values[name] = vals
    return HpGrid(values, dict(grid.prune))


def per_stage_search(
    train: Dataset,
    o: casc.ClassOrdering,
    grid: HpGrid,
    cv: CvConfig,
    mode: str,                  # gs | hgs
    hc: HalvingConfig | None = None,
    weights_mode: str = "none",
    policy: casc.LastStagePolicy = casc.LastStagePolicy(),
    base_params: GbtParams = GbtParams(),
    thresholds: float = casc.DEFAULT_THRESHOLD,
) -> tuple[casc.SbcModel, list[HpoResult]]:
    """Independent grid/halving search per cascade stage (no pruning)."""
    if mode not in ("gs", "hgs"):
        raise ValueError(f"mode must be gs or hgs, got {mode!r}")
    views = casc.stage_views(train, o, policy)
    stage_weights = "none" if weights_mode == "none" else "inverse_frequency"
    results = []
    best_per_stage = []
    for view in views:
        X = train.features[view.row_indices]
        y = view.binary_labels
        try:
            if mode == "gs":
                result = grid_search(grid, X, y, cv, "binary", stage_weights, base_params)
            else:
                result = halving_grid_search(
                    grid, X, y, cv, hc or HalvingConfig(),
                    objective="binary", weights_mode=stage_weights, base_params=base_params,
                )
        except Exception as exc:
            raise StageError(view.stage, exc) from exc
        results.append(result)
        best_per_stage.append(result.best_params)

    sbc_mode = "none" if weights_mode == "none" else "per_stage_inverse_frequency"
    model = casc.train_cascade(train, o, best_per_stage, sbc_mode, policy, thresholds)
    return model, results


def phgs_cascade(
    train: Dataset,
    o: casc.ClassOrdering,
    grid: HpGrid,
    cv: CvConfig,
    hc: HalvingConfig,
    weights_mode: str = "none",
    policy: casc.LastStagePolicy = casc.LastStagePolicy(),
    base_params: GbtParams = GbtParams(),
    thresholds: float = casc.DEFAULT_THRESHOLD,
) -> tuple[casc.SbcModel, list[HpoResult]]:
    """Per-stage halving search where stage i's grid is the previous stage's
    effective grid pruned around its best parameters."""
    views = casc.stage_views(train, o, policy)
    stage_weights = "none" if weights_mode == "none" else "inverse_frequency"
    results = []
    best_per_stage = []
    current_grid = grid
    for view in views:
        X = train.features[view.row_indices]
        y = view.binary_labels
        try:
            result = halving_grid_search(
                current_grid, X, y, cv, hc,
                objective="binary", weights_mode=stage_weights, base_params=base_params,
            )
        except Exception as exc:
            raise StageError(view.stage, exc) from exc
        results.append(result)
        best_per_stage.append(result.best_params)
        if view.stage < o.n - 1:
            current_grid = prune_grid(current_grid, result.best_params)

    sbc_mode = "none" if weights_mode == "none" else "per_stage_inverse_frequency"
    model = casc.train_cascade(train, o, best_per_stage, sbc_mode, policy, thresholds)
    return model, results
