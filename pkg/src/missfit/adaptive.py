"""Adaptive linear regression: coefficients that react to the missingness pattern.

The model hierarchy, from least to most expressive:

  Static          z_j = (1-m_j) x_j only                           (d columns)
  AffineIntercept z ++ m                                           (2d columns)
  Affine          z ++ m ++ {m_k z_j : k != j}                     (d + d^2 columns)
  Polynomial(t)   z ++ mask monomials ++ z times mask monomials
  FullyAdaptive   one static model per observed pattern

The intercept is treated as a constant, never-missing pseudo-feature, so the
affine expansion carries the raw mask indicators (its identically-zero
diagonal interactions m_j z_j are dropped, keeping the column count at
d + d^2). Each expansion's columns are a superset of the previous one's, so
in-sample error is monotone along the hierarchy at lambda = 0.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .core import MaskedDataset, PatternKey, masked_dot, unique_patterns, validate
from .elasticnet import ElasticNetSpec, LinearFit, fit as enet_fit, support_penalty_weights


@dataclass(frozen=True)
class ExpansionMode:
    kind: str  # static | affine_intercept | affine | polynomial | fully_adaptive
    degree: int | None = None

    _KINDS = ("static", "affine_intercept", "affine", "polynomial", "fully_adaptive")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown expansion kind {self.kind!r}")
        if self.kind == "polynomial":
            if self.degree is None or self.degree < 1:
                raise ValueError("polynomial mode needs degree >= 1")

    @classmethod
    def parse(cls, name: str) -> "ExpansionMode":
        if name.startswith("polynomial"):
            return cls("polynomial", int(name[len("polynomial"):] or 1))
        return cls(name)

    @property
    def name(self) -> str:
        if self.kind == "polynomial":
            return f"polynomial{self.degree}"
        return self.kind


STATIC = ExpansionMode("static")
AFFINE_INTERCEPT = ExpansionMode("affine_intercept")
AFFINE = ExpansionMode("affine")
FULLY_ADAPTIVE = ExpansionMode("fully_adaptive")


def _mask_monomials(d: int, t: int):
    """Index sets J, |J| in 1..t, in (size, lexicographic) order."""
    out = []
    for size in range(1, t + 1):
        out.extend(itertools.combinations(range(d), size))
    return out


def _interaction_sets(d: int, t: int):
    """(j', J) pairs for terms z_{j'} * prod(m_J), J nonempty, j' not in J."""
    out = []
    for jp in range(d):
        rest = [j for j in range(d) if j != jp]
        for size in range(1, t + 1):
            out.extend((jp, J) for J in itertools.combinations(rest, size))
    return out


def expansion_size(d: int, mode: ExpansionMode) -> int:
    if mode.kind == "static":
        return d
    if mode.kind == "affine_intercept":
        return 2 * d
    if mode.kind == "affine":
        return d + d * d
    if mode.kind == "polynomial":
        t = min(mode.degree, d)
        return d + len(_mask_monomials(d, t)) + len(_interaction_sets(d, t))
    raise ValueError(f"no fixed expansion size for {mode.kind}")


def expansion_labels(d: int, mode: ExpansionMode) -> list[str]:
    z = [f"z{j+1}" for j in range(d)]
    if mode.kind == "static":
        return z
    if mode.kind == "affine_intercept":
        return z + [f"m{j+1}" for j in range(d)]
    if mode.kind == "affine":
        t = 1
    else:
        t = min(mode.degree, d)
    mono = ["*".join(f"m{j+1}" for j in J) for J in _mask_monomials(d, t)]
    inter = [f"z{jp+1}*" + "*".join(f"m{j+1}" for j in J)
             for jp, J in _interaction_sets(d, t)]
    return z + mono + inter


def expand_matrix(X, M, mode: ExpansionMode) -> np.ndarray:
    """Row-wise feature expansion for a whole matrix; see expand()."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if X.shape != M.shape:
        raise ValueError(f"X shape {X.shape} != M shape {M.shape}")
    d = X.shape[1]
    Z = (1 - M) * np.where(M == 1, 0.0, X)  # kill stored values at missing slots
    if mode.kind == "static":
        return Z
    if mode.kind == "affine_intercept":
        return np.column_stack([Z, M])
    if mode.kind == "affine":
        t = 1
    elif mode.kind == "polynomial":
        if mode.degree > d:
            raise ValueError(f"polynomial degree {mode.degree} exceeds d={d}")
        t = mode.degree
    else:
        raise ValueError(f"cannot expand mode {mode.kind}")
    mono = [np.prod(M[:, list(J)], axis=1) for J in _mask_monomials(d, t)]
    inter = [Z[:, jp] * np.prod(M[:, list(J)], axis=1)
             for jp, J in _interaction_sets(d, t)]
    return np.column_stack([Z] + mono + inter)


def expand(x, m, mode: ExpansionMode) -> np.ndarray:
    """Expanded feature vector for one observation.

    Output ordering: z block, then mask monomials by (size, lex) order, then
    interaction terms grouped by observed feature. See expansion_labels().
    """
    return expand_matrix(x, m, mode)[0]


@dataclass
class AdaptiveModel:
    mode: ExpansionMode
    d: int
    fit: LinearFit | None  # None for fully adaptive
    expansion_size: int
    pattern_fits: dict[PatternKey, LinearFit] | None = None
    fallback: LinearFit | None = None  # static model for unseen patterns

    def predict_matrix(self, X, M) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        M = np.atleast_2d(np.asarray(M))
        if X.shape[1] != self.d:
            raise ValueError(f"expected d={self.d} features, got {X.shape[1]}")
        if self.mode.kind == "fully_adaptive":
            Z = (1 - M) * np.where(M == 1, 0.0, X)
            out = np.empty(X.shape[0])
            for i in range(X.shape[0]):
                f = self.pattern_fits.get(PatternKey.from_row(M[i]), self.fallback)
                out[i] = f.intercept + float(Z[i] @ f.coefficients)
            return out
        return self.fit.predict(expand_matrix(X, M, self.mode))

    def predict(self, x, m) -> float:
        return float(self.predict_matrix(np.atleast_2d(x), np.atleast_2d(m))[0])


def fit_adaptive(dataset: MaskedDataset, mode: ExpansionMode,
                 spec: ElasticNetSpec) -> AdaptiveModel:
    """Fit one model from the hierarchy by penalized least squares.

    Unless the spec pins penalty_weights, per-column weights are derived from
    the expanded design's support counts (sparser columns get penalized more).
    """
    validate(dataset)
    if dataset.n < 1:
        raise ValueError("empty dataset")
    if mode.kind == "fully_adaptive":
        groups = unique_patterns(dataset)
        pattern_fits = {}
        for key, rows in groups:
            sub = dataset.subset(rows)
            A = expand_matrix(sub.X, sub.M, STATIC)
            pattern_fits[key] = enet_fit(A, sub.y, _with_weights(A, spec))
        A_all = expand_matrix(dataset.X, dataset.M, STATIC)
        fallback = enet_fit(A_all, dataset.y, _with_weights(A_all, spec))
        return AdaptiveModel(mode, dataset.d, None, len(pattern_fits),
                             pattern_fits, fallback)
    A = expand_matrix(dataset.X, dataset.M, mode)
    lin = enet_fit(A, dataset.y, _with_weights(A, spec))
    return AdaptiveModel(mode, dataset.d, lin, A.shape[1])


def _with_weights(A, spec: ElasticNetSpec) -> ElasticNetSpec:
    if spec.penalty_weights is not None:
        return spec
    from dataclasses import replace
    return replace(spec, penalty_weights=support_penalty_weights(A))


def extract_imputation(model: AdaptiveModel) -> tuple[np.ndarray, np.ndarray]:
    """Read off the implied constant imputation from an affine-intercept fit.

    mu_j = (coefficient of m_j) / (coefficient of z_j). Entries where the z
    coefficient is (numerically) zero are flagged invalid: there the model
    uses the missingness indicator directly, not an imputed value.
    """
    if model.mode.kind != "affine_intercept":
        raise ValueError("imputation extraction requires an affine_intercept model")
    d = model.d
    w = model.fit.coefficients[:d]
    b = model.fit.coefficients[d:2 * d]
    valid = np.abs(w) >= 1e-8
    mu = np.where(valid, b / np.where(valid, w, 1.0), 0.0)
    return mu, valid


# ---------------------------------------------------------------------------
# Finitely adaptive regression: recursive partitioning of pattern space.

@dataclass
class TreeNode:
    fit: LinearFit
    n_rows: int
    split_feature: int | None = None  # None at leaves
    left: "TreeNode | None" = None    # m_j = 0 branch
    right: "TreeNode | None" = None   # m_j = 1 branch


@dataclass
class PartitionTree:
    root: TreeNode
    d: int

    def route(self, m) -> TreeNode:
        node = self.root
        m = np.asarray(m)
        while node.split_feature is not None:
            node = node.left if m[node.split_feature] == 0 else node.right
        return node

    def predict(self, x, m) -> float:
        if len(np.atleast_1d(x)) != self.d:
            raise ValueError(f"expected d={self.d} features")
        leaf = self.route(m)
        return leaf.fit.intercept + masked_dot(leaf.fit.coefficients, x, m)

    def predict_matrix(self, X, M) -> np.ndarray:
        return np.array([self.predict(X[i], M[i]) for i in range(len(X))])

    def leaves(self) -> list[TreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.split_feature is None:
                out.append(node)
            else:
                stack.extend([node.right, node.left])
        return out


def _static_fit_sse(sub: MaskedDataset, spec: ElasticNetSpec):
    A = expand_matrix(sub.X, sub.M, STATIC)
    f = enet_fit(A, sub.y, _with_weights(A, spec))
    sse = float(np.sum((sub.y - f.predict(A)) ** 2))
    return f, sse


def fit_finite_adaptive(dataset: MaskedDataset, spec: ElasticNetSpec,
                        max_depth: int = 4, min_leaf: int = 20,
                        min_gain: float = 1e-3) -> PartitionTree:
    """Greedy recursive partitioning of missingness-pattern space.

    Each candidate split tests one feature's missingness bit; both sides get
    a freshly fitted static model and the feature with the lowest summed
    in-sample squared error wins (lowest index on ties). Splits stop at
    max_depth, when a side would drop below min_leaf rows, or when the
    relative error reduction falls below min_gain.
    """
    validate(dataset)

    def build(rows: np.ndarray, depth: int) -> TreeNode:
        sub = dataset.subset(rows)
        f, sse = _static_fit_sse(sub, spec)
        node = TreeNode(fit=f, n_rows=len(rows))
        if depth >= max_depth or len(rows) < 2 * min_leaf:
            return node
        best = None  # (sse, j, left_rows, right_rows, fits)
        Msub = dataset.M[rows]
        for j in range(dataset.d):
            left = rows[Msub[:, j] == 0]
            right = rows[Msub[:, j] == 1]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            fl, sl = _static_fit_sse(dataset.subset(left), spec)
            fr, sr = _static_fit_sse(dataset.subset(right), spec)
            if best is None or sl + sr < best[0]:
                best = (sl + sr, j, left, right, fl, fr)
        if best is None:
            return node
        total, j, left, right, fl, fr = best
        gain = (sse - total) / sse if sse > 0 else 0.0
        if gain < min_gain:
            return node
        node.split_feature = j
        node.left = build(left, depth + 1)
        node.right = build(right, depth + 1)
        return node

    root = build(np.arange(dataset.n), 0)
    return PartitionTree(root, dataset.d)


# ---------------------------------------------------------------------------
# JSON round-trip

def _fit_to_json(f: LinearFit) -> dict:
    return {"intercept": f.intercept, "coefficients": list(map(float, f.coefficients)),
            "converged": f.converged}


def _fit_from_json(obj) -> LinearFit:
    return LinearFit(obj["intercept"], np.array(obj["coefficients"]), [],
                     obj.get("converged", True))


def model_to_json(model: AdaptiveModel) -> str:
    doc = {"type": "adaptive", "mode": model.mode.name, "d": model.d,
           "expansion_size": model.expansion_size}
    if model.mode.kind == "fully_adaptive":
        doc["patterns"] = [{"bits": list(k.bits), "fit": _fit_to_json(v)}
                           for k, v in model.pattern_fits.items()]
        doc["fallback"] = _fit_to_json(model.fallback)
    else:
        doc["fit"] = _fit_to_json(model.fit)
    return json.dumps(doc, indent=1)


def model_from_json(text: str) -> AdaptiveModel:
    doc = json.loads(text)
    mode = ExpansionMode.parse(doc["mode"])
    if mode.kind == "fully_adaptive":
        pats = {PatternKey(tuple(p["bits"])): _fit_from_json(p["fit"])
                for p in doc["patterns"]}
        return AdaptiveModel(mode, doc["d"], None, doc["expansion_size"],
                             pats, _fit_from_json(doc["fallback"]))
    return AdaptiveModel(mode, doc["d"], _fit_from_json(doc["fit"]),
                         doc["expansion_size"])


def _node_to_json(node: TreeNode) -> dict:
    doc = {"fit": _fit_to_json(node.fit), "n_rows": node.n_rows}
    if node.split_feature is not None:
        doc["split_feature"] = node.split_feature
        doc["left"] = _node_to_json(node.left)
        doc["right"] = _node_to_json(node.right)
    return doc


def _node_from_json(obj) -> TreeNode:
    node = TreeNode(_fit_from_json(obj["fit"]), obj["n_rows"])
    if "split_feature" in obj:
        node.split_feature = obj["split_feature"]
        node.left = _node_from_json(obj["left"])
        node.right = _node_from_json(obj["right"])
    return node


def tree_to_json(tree: PartitionTree) -> str:
    return json.dumps({"type": "partition_tree", "d": tree.d,
                       "root": _node_to_json(tree.root)}, indent=1)


def tree_from_json(text: str) -> PartitionTree:
    doc = json.loads(text)
    return PartitionTree(_node_from_json(doc["root"]), doc["d"])
