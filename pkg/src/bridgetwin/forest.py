"""Random forest regression built from scratch for fatigue-trend prediction.

CART regression trees with sum-of-squared-error splits, midpoint thresholds,
per-node random feature subsets, and bootstrap bagging.  Per-tree streams are
derived from the master seed, so fitting is bit-deterministic; impurity
decreases accumulate into normalized feature importances; rows left out of a
tree's bootstrap provide the out-of-bag error estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .environment import EnvState
from .errors import ConfigError
from .ingestion import ObservedDensity, VehicleClass
from .seeding import RandomStream, derive_seed

FEATURE_NAMES = (
    "mean_density",
    "peak_density",
    "truck_fraction",
    "shock_count",
    "mean_m_env",
    "ft_cycles",
    "mean_speed_ratio",
)

MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FeatureRow:
    """One fixed-order feature vector with its per-window score-increment target."""

    features: tuple[float, ...]
    target: float
    window: tuple[float, float] | None = None


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 5
    m_try: int | None = None  # None = ceil(p / 3)
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.m_try is not None and self.m_try < 1:
            raise ConfigError(f"m_try must be >= 1, got {self.m_try}")

    def resolve_m_try(self, n_features: int) -> int:
        m = self.m_try if self.m_try is not None else math.ceil(n_features / 3)
        if m > n_features:
            raise ConfigError(f"m_try={m} exceeds feature count {n_features}")
        return m


@dataclass
class TreeNode:
    """Split node or leaf; leaves carry the mean target of their samples."""

    prediction: float | None = None
    feature_index: int | None = None
    threshold: float | None = None
    impurity_decrease: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.prediction is not None


@dataclass(frozen=True)
class ImportanceReport:
    importances: tuple[float, ...]  # per feature, sums to 1 or all zeros
    oob_rmse: float | None


@dataclass
class Forest:
    config: ForestConfig
    feature_names: tuple[str, ...]
    trees: list[TreeNode] = field(default_factory=list)
    raw_importances: np.ndarray | None = None
    oob_rmse: float | None = None

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def _sse_terms(y_sorted_cumsum: np.ndarray, n: int) -> np.ndarray:
    """Helper values ``(sum_left^2/k + sum_right^2/(n-k))`` for all split points."""
    k = np.arange(1, n)
    left = y_sorted_cumsum[k - 1]
    total = y_sorted_cumsum[-1]
    right = total - left
    return left * left / k + right * right / (n - k)


def _best_split(x_col: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[float, float] | None:
    """Best (gain, threshold) on one feature, or None when no valid cut exists."""
    n = y.size
    order = np.argsort(x_col, kind="stable")
    xs = x_col[order]
    ys = y[order]
    csum = np.cumsum(ys)
    candidates = _sse_terms(csum, n)
    k = np.arange(1, n)
    valid = (xs[1:] != xs[:-1]) & (k >= min_leaf) & (n - k >= min_leaf)
    if not np.any(valid):
        return None
    base = csum[-1] * csum[-1] / n
    gains = np.where(valid, candidates - base, -np.inf)
    best = int(np.argmax(gains))
    gain = max(0.0, float(gains[best]))
    threshold = 0.5 * (float(xs[best]) + float(xs[best + 1]))
    return gain, threshold


def _grow(x: np.ndarray, y: np.ndarray, depth: int, cfg: ForestConfig, m_try: int,
          stream: RandomStream, importances: np.ndarray) -> TreeNode:
    n, p = x.shape
    if depth >= cfg.max_depth or n < 2 * cfg.min_leaf or np.all(y == y[0]):
        return TreeNode(prediction=float(np.mean(y)))

    if m_try < p:
        pool = list(range(p))
        chosen = []
        for k in range(m_try):
            j = k + stream.randbelow(p - k)
            pool[k], pool[j] = pool[j], pool[k]
            chosen.append(pool[k])
        candidates = sorted(chosen)
    else:
        candidates = list(range(p))

    best: tuple[float, int, float] | None = None  # (gain, feature, threshold)
    for f in candidates:
        found = _best_split(x[:, f], y, cfg.min_leaf)
        if found is None:
            continue
        gain, threshold = found
        # Ties break to the lowest feature index, then the lowest threshold
        # (argmax inside _best_split already returns the lowest threshold).
        if best is None or gain > best[0]:
            best = (gain, f, threshold)
    if best is None:
        return TreeNode(prediction=float(np.mean(y)))

    gain, feature, threshold = best
    mask = x[:, feature] <= threshold
    importances[feature] += gain
    left = _grow(x[mask], y[mask], depth + 1, cfg, m_try, stream, importances)
    right = _grow(x[~mask], y[~mask], depth + 1, cfg, m_try, stream, importances)
    return TreeNode(feature_index=feature, threshold=threshold,
                    impurity_decrease=gain, left=left, right=right)


def fit(rows: Sequence[FeatureRow], cfg: ForestConfig,
        feature_names: Sequence[str] = FEATURE_NAMES) -> Forest:
    """Grow the ensemble on bootstrap resamples; deterministic for a fixed seed."""
    if len(rows) < 2:
        raise ValueError(f"need at least 2 rows to fit, got {len(rows)}")
    p = len(feature_names)
    x = np.array([r.features for r in rows], dtype=np.float64)
    y = np.array([r.target for r in rows], dtype=np.float64)
    if x.shape[1] != p:
        raise ValueError(f"rows have {x.shape[1]} features, expected {p}")
    m_try = cfg.resolve_m_try(p)
    n = x.shape[0]

    forest = Forest(config=cfg, feature_names=tuple(feature_names))
    importances = np.zeros(p, dtype=np.float64)
    oob_pred_sum = np.zeros(n, dtype=np.float64)
    oob_pred_count = np.zeros(n, dtype=np.int64)

    for tree_index in range(cfg.n_trees):
        stream = RandomStream(derive_seed(cfg.seed, tree_index, "tree"))
        if cfg.bootstrap:
            sample = np.array([stream.randbelow(n) for _ in range(n)], dtype=np.int64)
            in_bag = np.zeros(n, dtype=bool)
            in_bag[sample] = True
            root = _grow(x[sample], y[sample], 0, cfg, m_try, stream, importances)
            oob = ~in_bag
            if np.any(oob):
                preds = np.array([_predict_tree(root, row) for row in x[oob]])
                oob_pred_sum[oob] += preds
                oob_pred_count[oob] += 1
        else:
            root = _grow(x, y, 0, cfg, m_try, stream, importances)
        forest.trees.append(root)

    forest.raw_importances = importances
    if cfg.bootstrap and np.any(oob_pred_count > 0):
        covered = oob_pred_count > 0
        residual = oob_pred_sum[covered] / oob_pred_count[covered] - y[covered]
        forest.oob_rmse = float(np.sqrt(np.mean(residual * residual)))
    return forest


def _predict_tree(node: TreeNode, features: np.ndarray) -> float:
    while not node.is_leaf:
        node = node.left if features[node.feature_index] <= node.threshold else node.right
    return node.prediction


def predict(forest: Forest, features: Sequence[float]) -> float:
    """Mean of the per-tree leaf predictions."""
    vec = np.asarray(features, dtype=np.float64)
    if vec.shape != (forest.n_features,):
        raise ValueError(f"expected {forest.n_features} features, got {vec.shape}")
    total = 0.0
    for tree in forest.trees:
        total += _predict_tree(tree, vec)
    return total / len(forest.trees)


def importance(forest: Forest) -> ImportanceReport:
    """Impurity-decrease importances normalized to sum 1 (all zeros when no split)."""
    raw = forest.raw_importances
    if raw is None:
        raise ValueError("forest is not fitted")
    total = float(np.sum(raw))
    if total == 0.0:
        normalized = tuple(0.0 for _ in raw)
    else:
        normalized = tuple(float(v / total) for v in raw)
    return ImportanceReport(importances=normalized, oob_rmse=forest.oob_rmse)


def holdout_rmse(rows: Sequence[FeatureRow], cfg: ForestConfig,
                 fraction: float = 0.2) -> float | None:
    """RMSE on the most recent ``fraction`` of rows, trained on the earlier rest."""
    n_eval = int(len(rows) * fraction)
    n_train = len(rows) - n_eval
    if n_eval < 1 or n_train < 2:
        return None
    model = fit(rows[:n_train], cfg)
    residuals = [predict(model, r.features) - r.target for r in rows[n_train:]]
    return math.sqrt(sum(r * r for r in residuals) / n_eval)


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"leaf": node.prediction}
    return {
        "f": node.feature_index,
        "t": node.threshold,
        "g": node.impurity_decrease,
        "l": _node_to_dict(node.left),
        "r": _node_to_dict(node.right),
    }


def _node_from_dict(obj: dict) -> TreeNode:
    if "leaf" in obj:
        return TreeNode(prediction=float(obj["leaf"]))
    return TreeNode(
        feature_index=int(obj["f"]),
        threshold=float(obj["t"]),
        impurity_decrease=float(obj["g"]),
        left=_node_from_dict(obj["l"]),
        right=_node_from_dict(obj["r"]),
    )


def to_json(forest: Forest) -> str:
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": "bridgetwin-forest",
        "feature_names": list(forest.feature_names),
        "config": {
            "n_trees": forest.config.n_trees,
            "max_depth": forest.config.max_depth,
            "min_leaf": forest.config.min_leaf,
            "m_try": forest.config.m_try,
            "seed": forest.config.seed,
            "bootstrap": forest.config.bootstrap,
        },
        "raw_importances": [float(v) for v in forest.raw_importances],
        "oob_rmse": forest.oob_rmse,
        "trees": [_node_to_dict(t) for t in forest.trees],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def from_json(text: str) -> Forest:
    doc = json.loads(text)
    if not isinstance(doc, dict) or doc.get("kind") != "bridgetwin-forest":
        raise ConfigError("not a forest model document")
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported model schema version {doc.get('schema_version')}, "
            f"expected {MODEL_SCHEMA_VERSION}"
        )
    cfg = ForestConfig(**doc["config"])
    forest = Forest(config=cfg, feature_names=tuple(doc["feature_names"]))
    forest.trees = [_node_from_dict(t) for t in doc["trees"]]
    forest.raw_importances = np.array(doc["raw_importances"], dtype=np.float64)
    forest.oob_rmse = doc["oob_rmse"]
    return forest


def assemble_features(timestamps: Sequence[float], densities: Sequence[ObservedDensity],
                      mean_speed_ratios: Sequence[float], shock_times: Sequence[float],
                      env_states: Sequence[EnvState], score_series: Sequence[float],
                      window: float) -> tuple[list[FeatureRow], int]:
    """Aggregate pipeline series into per-window rows.

    Windows tile the run from its first timestamp; a trailing partial window is
    discarded.  Windows containing any invalid observation are dropped and
    counted (second return value).  The target is the fatigue-score increment
    over the window.
    """
    n = len(timestamps)
    if not (len(densities) == len(mean_speed_ratios) == len(env_states) == len(score_series) == n):
        raise ValueError("assemble_features inputs must share one time grid")
    if n == 0:
        raise ValueError("no samples to assemble features from")
    if window <= 0:
        raise ConfigError(f"feature window must be > 0, got {window}")

    t0 = timestamps[0]
    dt = timestamps[1] - timestamps[0] if n > 1 else 1.0
    n_windows = int(n * dt / window + 1e-9)
    if n_windows < 1:
        raise ValueError(
            f"run of {n * dt} s is shorter than one feature window of {window} s"
        )

    rows: list[FeatureRow] = []
    dropped = 0
    sorted_shocks = sorted(shock_times)
    for w in range(n_windows):
        w_start = t0 + w * window
        w_end = w_start + window
        idx = [k for k in range(n) if w_start <= timestamps[k] < w_end]
        if not idx:
            dropped += 1
            continue
        if any(not densities[k].valid for k in idx):
            dropped += 1
            continue
        rho = [densities[k].rho_stable for k in idx]
        total_count = sum(densities[k].vehicle_count for k in idx)
        truck_count = sum(densities[k].class_counts.get(VehicleClass.TRUCK, 0) for k in idx)
        shock_count = sum(1 for t in sorted_shocks if w_start <= t < w_end)
        first, last = idx[0], idx[-1]
        score_before = score_series[first - 1] if first > 0 else 0.0
        features = (
            sum(rho) / len(rho),
            max(rho),
            truck_count / total_count if total_count > 0 else 0.0,
            float(shock_count),
            sum(env_states[k].m_env for k in idx) / len(idx),
            float(max(env_states[k].freeze_thaw_cycles_in_window for k in idx)),
            sum(mean_speed_ratios[k] for k in idx) / len(idx),
        )
        rows.append(FeatureRow(features=features, target=score_series[last] - score_before,
                               window=(w_start, w_end)))
    return rows, dropped
