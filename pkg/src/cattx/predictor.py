"""Data-rate prediction with an M5-style model tree.

Splits are chosen by standard deviation reduction (SDR), growth is limited by
``min_leaf``, ``max_depth`` and a relative SDR gain threshold, and leaves carry a
least-squares linear model over the features tested on their path (falling back
to the leaf mean when that system is singular). M5's smoothing and post-pruning
passes are not implemented.

Population standard deviation is used throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .rng import substream
from .trace import ContextSnapshot

if TYPE_CHECKING:
    from .geomap import GridMap

BASE_FEATURES = ("rsrp", "rsrq", "snr", "cqi", "speed", "heading", "payload_bytes")
MAP_FEATURE = "map_rate"
MODEL_FORMAT_VERSION = 1
# Relative tolerance under which two candidate SDR values count as tied.
TIE_RTOL = 1e-12


class PredictorError(ValueError):
    pass


@dataclass(frozen=True)
class TreeParams:
    min_leaf: int = 8
    max_depth: int = 12
    linear_leaves: bool = True
    min_sdr_gain: float = 0.05

    def __post_init__(self) -> None:
        if self.min_leaf < 2:
            raise PredictorError("min_leaf must be >= 2")
        if self.max_depth < 1:
            raise PredictorError("max_depth must be >= 1")
        if not self.min_sdr_gain >= 0:
            raise PredictorError("min_sdr_gain must be >= 0")


@dataclass
class Node:
    # inner node
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    # leaf
    mean: float = 0.0
    coef: Optional[list[float]] = None
    coef_features: Optional[list[int]] = None
    intercept: float = 0.0
    n_rows: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.left < 0


@dataclass
class RegressionTree:
    n_features: int
    nodes: list[Node]
    # training row indices per leaf, kept only in memory
    leaf_rows: dict[int, np.ndarray] = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_leaves(self) -> int:
        return sum(1 for n in self.nodes if n.is_leaf)

    @property
    def depth(self) -> int:
        def _d(i: int) -> int:
            n = self.nodes[i]
            return 0 if n.is_leaf else 1 + max(_d(n.left), _d(n.right))
        return _d(0)

    def leaf_index(self, x: Sequence[float]) -> int:
        i = 0
        while not self.nodes[i].is_leaf:
            n = self.nodes[i]
            i = n.left if x[n.feature] <= n.threshold else n.right
        return i


def _sd(y: np.ndarray) -> float:
    return float(np.std(y)) if len(y) else 0.0


def best_split(x: np.ndarray, y: np.ndarray, min_leaf: int) -> Optional[tuple[float, float]]:
    """Best SDR split of targets ``y`` on feature column ``x``.

    Candidates are midpoints between consecutive distinct sorted values that leave
    at least ``min_leaf`` rows on each side. Returns ``(threshold, sdr)`` for the
    largest SDR (lowest threshold among ties), or None if no candidate exists or
    no candidate reduces the standard deviation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 2 * min_leaf:
        return None
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    sd_t = _sd(ys)
    if sd_t == 0.0:
        return None
    yc = ys - ys.mean()
    c1 = np.cumsum(yc)
    c2 = np.cumsum(yc * yc)

    # split after position i puts rows [0..i] on the left
    i = np.arange(min_leaf - 1, n - min_leaf)
    i = i[xs[i] < xs[i + 1]]
    if len(i) == 0:
        return None
    nl = (i + 1).astype(float)
    nr = n - nl
    var_l = c2[i] / nl - (c1[i] / nl) ** 2
    var_r = (c2[-1] - c2[i]) / nr - ((c1[-1] - c1[i]) / nr) ** 2
    sdr = sd_t - (nl / n) * np.sqrt(np.maximum(var_l, 0.0)) - (nr / n) * np.sqrt(np.maximum(var_r, 0.0))

    # Shortlist near-ties from the fast pass, then settle them with two-pass sds.
    tol = TIE_RTOL * (1.0 + sd_t) + 1e-12
    best_fast = sdr.max()
    best: Optional[tuple[float, float]] = None
    for pos in i[sdr >= best_fast - 1e3 * tol]:
        lo, hi = xs[pos], xs[pos + 1]
        thr = (lo + hi) / 2.0
        if not lo <= thr < hi:
            thr = lo
        left, right = ys[: pos + 1], ys[pos + 1:]
        exact = sd_t - (len(left) / n) * _sd(left) - (len(right) / n) * _sd(right)
        if best is None or exact > best[1] + tol:
            best = (float(thr), float(exact))
    if best is None or not best[1] > tol:
        return None
    return best


def _fit_leaf(node: Node, X: np.ndarray, y: np.ndarray, path_features: list[int]) -> None:
    node.mean = float(np.mean(y))
    if not path_features:
        return
    A = np.column_stack([X[:, path_features], np.ones(len(y))])
    if len(y) < A.shape[1] or np.linalg.matrix_rank(A) < A.shape[1]:
        return
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    if not np.all(np.isfinite(sol)):
        return
    node.coef = [float(c) for c in sol[:-1]]
    node.coef_features = list(path_features)
    node.intercept = float(sol[-1])


def train(X: np.ndarray, y: np.ndarray, params: TreeParams = TreeParams()) -> RegressionTree:
    """Grow a model tree on feature matrix ``X`` (rows x features) and targets ``y``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise PredictorError("X must be 2-D with one row per target")
    if len(y) < 2:
        raise PredictorError("need at least 2 rows to train")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise PredictorError("training data must be finite")

    tree = RegressionTree(n_features=X.shape[1], nodes=[])

    def grow(rows: np.ndarray, depth: int, path: list[int]) -> int:
        idx = len(tree.nodes)
        node = Node(n_rows=len(rows))
        tree.nodes.append(node)
        yr = y[rows]
        split = None
        if depth < params.max_depth and len(rows) >= 2 * params.min_leaf:
            floor = params.min_sdr_gain * _sd(yr)
            for f in range(X.shape[1]):
                cand = best_split(X[rows, f], yr, params.min_leaf)
                if cand is None or cand[1] < floor:
                    continue
                if split is None or cand[1] > split[2] + TIE_RTOL * (1.0 + abs(split[2])):
                    split = (f, cand[0], cand[1])
        if split is None:
            feats = sorted(set(path)) if params.linear_leaves else []
            _fit_leaf(node, X[rows], yr, feats)
            tree.leaf_rows[idx] = rows
            return idx
        f, thr, _ = split
        go_left = X[rows, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = grow(rows[go_left], depth + 1, path + [f])
        node.right = grow(rows[~go_left], depth + 1, path + [f])
        return idx

    grow(np.arange(len(y)), 0, [])
    return tree


def predict(tree: RegressionTree, x: Sequence[float]) -> float:
    """Predicted rate for one feature vector, floored at 0."""
    if len(x) != tree.n_features:
        raise PredictorError(f"expected {tree.n_features} features, got {len(x)}")
    leaf = tree.nodes[tree.leaf_index(x)]
    if leaf.coef is None:
        value = leaf.mean
    else:
        value = leaf.intercept + sum(c * x[f] for c, f in zip(leaf.coef, leaf.coef_features))
    return max(float(value), 0.0)


def predict_many(tree: RegressionTree, X: np.ndarray) -> np.ndarray:
    return np.array([predict(tree, row) for row in np.asarray(X, dtype=float)])


def pearson_r(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    """Pearson correlation, or None when either side has zero variance."""
    a = np.asarray(a, dtype=float) - np.mean(a)
    b = np.asarray(b, dtype=float) - np.mean(b)
    den = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if den == 0.0:
        return None
    return float(np.dot(a, b)) / den


def cross_validate(X: np.ndarray, y: np.ndarray, params: TreeParams = TreeParams(),
                   k: int = 10, seed: int = 0) -> dict:
    """k-fold cross-validation with a seeded shuffle and contiguous folds.

    Out-of-fold predictions are pooled and scored once. ``r`` is None when the
    targets or the pooled predictions have zero variance.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if k < 2:
        raise PredictorError("k must be >= 2")
    if k > n:
        raise PredictorError(f"k={k} exceeds the number of rows ({n})")
    perm = substream(seed, "predictor.cv").permutation(n)
    pred = np.empty(n)
    folds = np.array_split(perm, k)
    for fi, fold in enumerate(folds):
        train_rows = np.concatenate([f for j, f in enumerate(folds) if j != fi])
        tree = train(X[train_rows], y[train_rows], params)
        pred[fold] = predict_many(tree, X[fold])
    err = pred - y
    return {
        "r": pearson_r(y, pred),
        "mae": float(np.mean(np.abs(err))),
        "rmse": float(math.sqrt(np.mean(err * err))),
        "n": n,
        "k": k,
    }


# -- features -----------------------------------------------------------------

def assemble_features(snapshot: ContextSnapshot, payload_bytes: float,
                      geomap: Optional["GridMap"] = None,
                      map_fallback: Optional[float] = None) -> list[float]:
    """Feature vector in the fixed order of ``BASE_FEATURES`` (+ map rate).

    The map feature is appended when ``map_fallback`` is given (i.e. the model was
    trained with it): the mean rate of the snapshot's grid cell when a map is
    supplied and that cell has observed rates, otherwise ``map_fallback``.
    """
    ch, mob = snapshot.channel, snapshot.mobility
    x = [float(ch.rsrp), float(ch.rsrq), float(ch.snr), float(ch.cqi),
         float(mob.speed), float(mob.heading), float(payload_bytes)]
    if map_fallback is not None:
        value = map_fallback
        if geomap is not None:
            from .geomap import lookup

            agg = lookup(geomap, mob.position)
            if agg is not None and agg.mean_rate_mbps is not None:
                value = agg.mean_rate_mbps
        x.append(float(value))
    return x


@dataclass
class RateModel:
    """A trained tree together with the feature layout it expects."""

    tree: RegressionTree
    feature_names: list[str]
    params: TreeParams
    map_fallback: Optional[float] = None

    def predict_snapshot(self, snapshot: ContextSnapshot, payload_bytes: float,
                         geomap: Optional["GridMap"] = None) -> float:
        return predict(self.tree, assemble_features(snapshot, payload_bytes, geomap, self.map_fallback))

    def to_json(self) -> str:
        nodes = []
        for n in self.tree.nodes:
            if n.is_leaf:
                nodes.append({"leaf": True, "mean": n.mean, "coef": n.coef,
                              "coef_features": n.coef_features, "intercept": n.intercept,
                              "n_rows": n.n_rows})
            else:
                nodes.append({"leaf": False, "feature": n.feature, "threshold": n.threshold,
                              "left": n.left, "right": n.right, "n_rows": n.n_rows})
        doc = {
            "version": MODEL_FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "params": asdict(self.params),
            "map_fallback": self.map_fallback,
            "nodes": nodes,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RateModel":
        try:
            doc = json.loads(text)
            if doc.get("version") != MODEL_FORMAT_VERSION:
                raise PredictorError(f"unsupported model version {doc.get('version')!r}")
            nodes = []
            for d in doc["nodes"]:
                if d["leaf"]:
                    nodes.append(Node(mean=d["mean"], coef=d["coef"], coef_features=d["coef_features"],
                                      intercept=d["intercept"], n_rows=d.get("n_rows", 0)))
                else:
                    nodes.append(Node(feature=d["feature"], threshold=d["threshold"],
                                      left=d["left"], right=d["right"], n_rows=d.get("n_rows", 0)))
            names = list(doc["feature_names"])
            return cls(RegressionTree(len(names), nodes), names, TreeParams(**doc["params"]),
                       doc.get("map_fallback"))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise PredictorError(f"malformed model document: {exc!r}") from None


def feature_names(with_map: bool) -> list[str]:
    return list(BASE_FEATURES) + ([MAP_FEATURE] if with_map else [])


def fit_model(X: np.ndarray, y: np.ndarray, params: TreeParams = TreeParams(),
              map_fallback: Optional[float] = None) -> RateModel:
    tree = train(X, y, params)
    return RateModel(tree, feature_names(map_fallback is not None), params, map_fallback)


def training_set(trace, payloads: Sequence[float], geomap: Optional["GridMap"] = None,
                 map_fallback: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """One row per snapshot with a ground-truth rate, paired with ``payloads``."""
    rows, targets = [], []
    for snap, payload in zip(trace.snapshots, payloads):
        if snap.rate_mbps is None:
            continue
        rows.append(assemble_features(snap, payload, geomap, map_fallback))
        targets.append(snap.rate_mbps)
    if len(rows) < 2:
        raise PredictorError("need at least 2 snapshots with rate_mbps to train")
    return np.array(rows), np.array(targets)


def training_set_from_log(trace, records, geomap: Optional["GridMap"] = None,
                          map_fallback: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """One row per logged transmission: context at its start time, logged payload and rate."""
    times = np.array([s.t for s in trace.snapshots])
    rows, targets = [], []
    for rec in records:
        i = int(np.argmin(np.abs(times - rec.t_start)))
        rows.append(assemble_features(trace.snapshots[i], rec.payload_bytes, geomap, map_fallback))
        targets.append(rec.rate_mbps)
    if len(rows) < 2:
        raise PredictorError("need at least 2 logged transmissions to train")
    return np.array(rows), np.array(targets)
