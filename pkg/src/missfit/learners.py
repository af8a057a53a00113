"""CART and random forest with Missing-Incorporated-in-Attribute splits.

Every internal node tests one feature and routes missing values to a fixed
side, so rows with any missingness pattern (seen or not) always reach a leaf.
Candidate splits per node and feature: the pure missing-vs-observed split,
then thresholds at midpoints of consecutive distinct observed values, each
with both choices of side for the missing rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import MaskedDataset, validate


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 6
    min_leaf: int = 5
    n_trees: int = 100
    mtry: int | None = None  # default: all features (tree), ceil(sqrt(d)) (forest)
    seed: int = 0
    task: str = "regression"  # or "classification" (binary y, Gini impurity)

    def __post_init__(self):
        if self.max_depth < 1 or self.min_leaf < 1 or self.n_trees < 1:
            raise ValueError("tree parameters must be positive")
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")


@dataclass
class MiaNode:
    prediction: float  # mean target (regression) or class-1 frequency
    n_rows: int
    feature: int | None = None
    threshold: float | None = None  # None with feature set = pure missingness split
    missing_side: str = "left"
    left: "MiaNode | None" = None
    right: "MiaNode | None" = None

    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class MiaTree:
    root: MiaNode
    d: int

    def predict_row(self, x, m) -> float:
        node = self.root
        while not node.is_leaf():
            j = node.feature
            if node.threshold is None:  # pure split: missing left, observed right
                node = node.left if m[j] == 1 else node.right
            elif m[j] == 1:
                node = node.left if node.missing_side == "left" else node.right
            else:
                node = node.left if x[j] <= node.threshold else node.right
        return node.prediction

    def predict(self, X, M) -> np.ndarray:
        X = np.atleast_2d(X)
        M = np.atleast_2d(M)
        return np.array([self.predict_row(X[i], M[i]) for i in range(len(X))])


def _impurity_sums(y: np.ndarray, task: str) -> float:
    """Total impurity (SSE, or n * Gini) of one node's targets."""
    n = len(y)
    if n == 0:
        return 0.0
    if task == "regression":
        return float(np.sum((y - y.mean()) ** 2))
    p = float(np.mean(y))
    return n * 2.0 * p * (1.0 - p)


def _best_split(X, M, y, rows, features, min_leaf, task):
    """Scan all (feature, threshold, side) candidates; return the winner.

    Returns (impurity, feature, threshold, side, left_rows, right_rows) or
    None. Candidates are visited in a fixed order (feature ascending, pure
    split first, thresholds ascending, left before right); strict improvement
    is required to displace the incumbent, so the lowest-ordered candidate
    wins ties.
    """
    best = None
    for j in features:
        mj = M[rows, j]
        xj = X[rows, j]
        miss = rows[mj == 1]
        obs = rows[mj == 0]
        # pure missing-vs-observed split
        if len(miss) >= min_leaf and len(obs) >= min_leaf:
            imp = _impurity_sums(y[miss], task) + _impurity_sums(y[obs], task)
            if best is None or imp < best[0]:
                best = (imp, j, None, "left", miss, obs)
        if len(obs) < 2:
            continue
        vals = np.unique(xj[mj == 0])
        if len(vals) < 2:
            continue
        order = obs[np.argsort(xj[mj == 0], kind="stable")]
        xo = X[order, j]
        for thr in (vals[:-1] + vals[1:]) / 2.0:
            n_left_obs = int(np.searchsorted(xo, thr, side="right"))
            left_obs = order[:n_left_obs]
            right_obs = order[n_left_obs:]
            for side in ("left", "right"):
                left = np.concatenate([left_obs, miss]) if side == "left" else left_obs
                right = right_obs if side == "left" else np.concatenate([right_obs, miss])
                if len(left) < min_leaf or len(right) < min_leaf:
                    continue
                imp = _impurity_sums(y[left], task) + _impurity_sums(y[right], task)
                if best is None or imp < best[0]:
                    best = (imp, j, float(thr), side, left, right)
    return best


def _build(X, M, y, rows, depth, params: TreeParams, rng) -> MiaNode:
    node = MiaNode(prediction=float(np.mean(y[rows])), n_rows=len(rows))
    if depth >= params.max_depth or len(rows) < 2 * params.min_leaf:
        return node
    if np.all(y[rows] == y[rows[0]]):
        return node
    d = X.shape[1]
    if rng is not None and params.mtry is not None and params.mtry < d:
        features = np.sort(rng.choice(d, params.mtry, replace=False))
    else:
        features = np.arange(d)
    parent_imp = _impurity_sums(y[rows], params.task)
    best = _best_split(X, M, y, rows, features, params.min_leaf, params.task)
    if best is None or best[0] >= parent_imp:
        return node
    imp, j, thr, side, left, right = best
    node.feature = j
    node.threshold = thr
    node.missing_side = side
    node.left = _build(X, M, y, left, depth + 1, params, rng)
    node.right = _build(X, M, y, right, depth + 1, params, rng)
    return node


def fit_cart_mia(dataset: MaskedDataset, params: TreeParams) -> MiaTree:
    """Fit a single MIA tree on the full dataset (no feature subsampling)."""
    validate(dataset)
    if dataset.n < 2 * params.min_leaf:
        raise ValueError("need at least 2 * min_leaf rows")
    root = _build(dataset.X, dataset.M, dataset.y, np.arange(dataset.n), 0,
                  params, rng=None)
    return MiaTree(root, dataset.d)


@dataclass
class Forest:
    trees: list[MiaTree]
    params: TreeParams
    d: int

    def predict(self, X, M) -> np.ndarray:
        preds = np.stack([t.predict(X, M) for t in self.trees])
        return preds.mean(axis=0)


def fit_forest(dataset: MaskedDataset, params: TreeParams,
               bootstrap: bool = True) -> Forest:
    """Bagged MIA trees with per-split feature subsampling.

    bootstrap=False fits every tree on the full sample (a single such tree
    with mtry=d reproduces fit_cart_mia exactly).
    """
    validate(dataset)
    mtry = params.mtry if params.mtry is not None else int(np.ceil(np.sqrt(dataset.d)))
    mtry = min(mtry, dataset.d)
    trees = []
    root_rng = np.random.default_rng(params.seed)
    tree_seeds = root_rng.integers(0, 2 ** 31, size=params.n_trees)
    for s in tree_seeds:
        rng = np.random.default_rng(int(s))
        rows = (rng.integers(0, dataset.n, size=dataset.n) if bootstrap
                else np.arange(dataset.n))
        sub_params = TreeParams(params.max_depth, params.min_leaf, params.n_trees,
                                mtry, params.seed, params.task)
        root = _build(dataset.X, dataset.M, dataset.y, np.asarray(rows), 0,
                      sub_params, rng)
        trees.append(MiaTree(root, dataset.d))
    return Forest(trees, params, dataset.d)


def mean_impute(dataset: MaskedDataset) -> tuple[np.ndarray, np.ndarray]:
    """Observed column means and the matrix with missing slots filled by them.

    Columns with no observed value get mu_j = 0.
    """
    X, M = dataset.X, dataset.M
    obs = (M == 0)
    counts = obs.sum(axis=0)
    sums = np.where(obs, np.where(M == 1, 0.0, X), 0.0).sum(axis=0)
    mu = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    imputed = np.where(M == 1, mu, X)
    return mu, imputed


# ---------------------------------------------------------------------------
# JSON round-trip

def _node_to_json(node: MiaNode) -> dict:
    doc = {"prediction": node.prediction, "n_rows": node.n_rows}
    if not node.is_leaf():
        doc.update(feature=int(node.feature), threshold=node.threshold,
                   missing_side=node.missing_side,
                   left=_node_to_json(node.left), right=_node_to_json(node.right))
    return doc


def _node_from_json(obj) -> MiaNode:
    node = MiaNode(obj["prediction"], obj["n_rows"])
    if "feature" in obj:
        node.feature = obj["feature"]
        node.threshold = obj["threshold"]
        node.missing_side = obj["missing_side"]
        node.left = _node_from_json(obj["left"])
        node.right = _node_from_json(obj["right"])
    return node


def tree_to_json(tree: MiaTree) -> str:
    return json.dumps({"type": "mia_tree", "d": tree.d,
                       "root": _node_to_json(tree.root)}, indent=1)


def tree_from_json(text: str) -> MiaTree:
    doc = json.loads(text)
    return MiaTree(_node_from_json(doc["root"]), doc["d"])


def forest_to_json(forest: Forest) -> str:
    return json.dumps({
        "type": "mia_forest", "d": forest.d,
        "params": {"max_depth": forest.params.max_depth,
                   "min_leaf": forest.params.min_leaf,
                   "n_trees": forest.params.n_trees,
                   "mtry": forest.params.mtry,
                   "seed": forest.params.seed,
                   "task": forest.params.task},
        "trees": [_node_to_json(t.root) for t in forest.trees]}, indent=1)


def forest_from_json(text: str) -> Forest:
    doc = json.loads(text)
    params = TreeParams(**doc["params"])
    trees = [MiaTree(_node_from_json(t), doc["d"]) for t in doc["trees"]]
    return Forest(trees, params, doc["d"])
