"""Frequency-ordered cascade of binary classifiers.

Stage i separates the i-th most frequent class from everything rarer;
the last stage gets sampled negatives from earlier classes. Inference
walks the stages in order and stops at the first acceptance; rows no
stage accepts come back as Unknown.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import gbt
from .data import Dataset, compute_sample_weights
from .errors import (
    DimensionMismatch,
    PolicySourceEmpty,
    StageError,
    StageOutOfRange,
    TooFewClasses,
)
from .gbt import GbtModel, GbtParams

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class ClassOrdering:
    """Bijection between original class ids and descending-frequency ranks."""

    class_at: tuple[int, ...]   # rank -> class id; class_at[0] is the majority class
    rank_of: dict[int, int]

    @property
    def n(self) -> int:
        return len(self.class_at)


@dataclass(frozen=True)
class StageView:
    stage: int
    row_indices: np.ndarray     # indices into the training Dataset
    binary_labels: np.ndarray   # 1 = this stage's class, 0 = rarer classes / sampled negatives

    @property
    def n_rows(self) -> int:
        return self.row_indices.size

    @property
    def n_positive(self) -> int:
        return int(self.binary_labels.sum())


@dataclass(frozen=True)
class LastStagePolicy:
    source: str = "majority_only"       # majority_only | all_others
    negatives_per_positive: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.source not in ("majority_only", "all_others"):
            raise ValueError(f"bad last-stage source {self.source!r}")
        if self.negatives_per_positive <= 0:
            raise ValueError("negatives_per_positive must be > 0")


@dataclass
class StageMetadata:
    train_size: int
    n_positive: int
    train_seconds: float


@dataclass
class Prediction:
    class_id: int | None                    # None = Unknown
    stage_trace: list[tuple[int, float]]    # (stage, probability) in evaluation order

    @property
    def is_unknown(self) -> bool:
        return self.class_id is None


@dataclass
class SbcModel:
    ordering: ClassOrdering
    stages: list[GbtModel]
    thresholds: list[float]
    last_stage_policy: LastStagePolicy
    metadata: list[StageMetadata]
    class_names: list[str]
    n_features: int

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "class_at": list(self.ordering.class_at),
            "thresholds": [float(t) for t in self.thresholds],
            "last_stage_policy": asdict(self.last_stage_policy),
            "metadata": [asdict(m) for m in self.metadata],
            "class_names": list(self.class_names),
            "n_features": self.n_features,
            "stages": [m.to_dict() for m in self.stages],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SbcModel":
        if d.get("format_version") != 1:
            raise ValueError(f"unsupported cascade format version {d.get('format_version')!r}")
        class_at = tuple(int(c) for c in d["class_at"])
        ordering = ClassOrdering(class_at, {c: i for i, c in enumerate(class_at)})
        return cls(
            ordering=ordering,
            stages=[GbtModel.from_dict(m) for m in d["stages"]],
            thresholds=[float(t) for t in d["thresholds"]],
            last_stage_policy=LastStagePolicy(**d["last_stage_policy"]),
            metadata=[StageMetadata(**m) for m in d["metadata"]],
            class_names=list(d["class_names"]),
            n_features=int(d["n_features"]),
        )


def order_classes(freqs: dict[int, int]) -> ClassOrdering:
    """Sort class ids by descending count; ties go to the lower class id."""
    if len(freqs) < 2:
        raise TooFewClasses("need at least 2 classes")
    if any(c <= 0 for c in freqs.values()):
        raise ValueError("all class counts must be > 0")
    class_at = tuple(sorted(freqs, key=lambda c: (-freqs[c], c)))
    return ClassOrdering(class_at, {c: i for i, c in enumerate(class_at)})


def binarize_stage(train: Dataset, o: ClassOrdering, i: int) -> StageView:
    """View for stage i < n-1: this stage's class vs all rarer classes."""
    if not (0 <= i <= o.n - 2):
        raise StageOutOfRange(f"stage {i} not in [0, {o.n - 2}]")
    ranks = np.array([o.rank_of[int(c)] for c in train.labels])
    rows = np.flatnonzero(ranks >= i)
    labels = (train.labels[rows] == o.class_at[i]).astype(np.int64)
    return StageView(i, rows, labels)


def last_stage_view(train: Dataset, o: ClassOrdering, p: LastStagePolicy) -> StageView:
    """View for the final stage: all rarest-class rows plus sampled negatives."""
    rarest = o.class_at[o.n - 1]
    pos = np.flatnonzero(train.labels == rarest)
    if pos.size == 0:
        raise PolicySourceEmpty(f"class {rarest} has no training rows")
    if p.source == "majority_only":
        source = np.flatnonzero(train.labels == o.class_at[0])
    else:
        source = np.flatnonzero(train.labels != rarest)
    if source.size == 0:
        raise PolicySourceEmpty(f"negative source {p.source!r} empty")
    n_neg = min(source.size, int(round(p.negatives_per_positive * pos.size)))
    rng = np.random.default_rng(p.seed)
    neg = source[np.sort(rng.choice(source.size, size=n_neg, replace=False))]
    rows = np.sort(np.concatenate([pos, neg]))
    labels = (train.labels[rows] == rarest).astype(np.int64)
    return StageView(o.n - 1, rows, labels)


def stage_views(train: Dataset, o: ClassOrdering, p: LastStagePolicy) -> list[StageView]:
    views = [binarize_stage(train, o, i) for i in range(o.n - 1)]
    views.append(last_stage_view(train, o, p))
    return views


def train_cascade(
    train: Dataset,
    o: ClassOrdering,
    params_per_stage: GbtParams | list[GbtParams],
    weights_mode: str = "none",
    policy: LastStagePolicy = LastStagePolicy(),
    thresholds: float | list[float] = DEFAULT_THRESHOLD,
) -> SbcModel:
    """Train all n stages in rank order.

    ``weights_mode`` of per_stage_inverse_frequency recomputes
    inverse-frequency weights on each stage's binarized labels. A single
    GbtParams/threshold broadcasts to every stage.
    """
    n = o.n
    if isinstance(params_per_stage, GbtParams):
        params_per_stage = [params_per_stage] * n
    if len(params_per_stage) != n:
        raise ValueError(f"need {n} GbtParams, got {len(params_per_stage)}")
    if isinstance(thresholds, (int, float)):
        thresholds = [float(thresholds)] * n
    if weights_mode not in ("none", "per_stage_inverse_frequency"):
        raise ValueError(f"unknown weights_mode {weights_mode!r}")

    stages = []
    metadata = []
    for view in stage_views(train, o, policy):
        i = view.stage
        X = train.features[view.row_indices]
        y = view.binary_labels
        scheme = "inverse_frequency" if weights_mode == "per_stage_inverse_frequency" else "none"
        w = compute_sample_weights(y, scheme)
        t0 = time.perf_counter()
        try:
            model = gbt.train_binary(X, y, w, params_per_stage[i])
        except Exception as exc:
            raise StageError(i, exc) from exc
        metadata.append(StageMetadata(view.n_rows, view.n_positive, time.perf_counter() - t0))
        stages.append(model)

    return SbcModel(
        ordering=o,
        stages=stages,
        thresholds=list(thresholds),
        last_stage_policy=policy,
        metadata=metadata,
        class_names=list(train.class_names),
        n_features=train.n_features,
    )


def predict(m: SbcModel, x: np.ndarray) -> Prediction:
    """Walk stages 0,1,... stopping at the first probability >= threshold."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != m.n_features:
        raise DimensionMismatch(f"expected {m.n_features} features, got {x.shape[1]}")
    trace: list[tuple[int, float]] = []
    for i, stage in enumerate(m.stages):
        p = float(stage.predict_proba(x)[0])
        trace.append((i, p))
        if p >= m.thresholds[i]:
            return Prediction(m.ordering.class_at[i], trace)
    return Prediction(None, trace)


def predict_batch(m: SbcModel, X: np.ndarray, unknown_action: str = "emit_unknown") -> list[Prediction]:
    """Batched cascade walk, equal to per-row predict.

    ``assign_last_class`` maps Unknown to the rarest class so closed-set
    metrics stay computable.
    """
    if unknown_action not in ("emit_unknown", "assign_last_class"):
        raise ValueError(f"unknown_action {unknown_action!r}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != m.n_features:
        raise DimensionMismatch(f"expected {m.n_features} features, got {X.shape[1]}")

    n_rows = X.shape[0]
    traces: list[list[tuple[int, float]]] = [[] for _ in range(n_rows)]
    outcome = np.full(n_rows, -1, dtype=np.int64)
    active = np.arange(n_rows)
    for i, stage in enumerate(m.stages):
        if active.size == 0:
            break
        probs = stage.predict_proba(X[active])
        accepted = probs >= m.thresholds[i]
        for r, p in zip(active, probs):
            traces[r].append((i, float(p)))
        outcome[active[accepted]] = m.ordering.class_at[i]
        active = active[~accepted]

    preds = []
    for r in range(n_rows):
        if outcome[r] >= 0:
            preds.append(Prediction(int(outcome[r]), traces[r]))
        elif unknown_action == "assign_last_class":
            preds.append(Prediction(m.ordering.class_at[m.ordering.n - 1], traces[r]))
        else:
            preds.append(Prediction(None, traces[r]))
    return preds
