"""Joint optimization of a constant per-feature imputation and a regressor.

Alternates between refitting the downstream predictor on the currently
imputed matrix and a cyclic coordinate search that nudges each imputed value
by plus or minus one standard error of that feature's mean, keeping whichever
of the three candidates gives the lowest training error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import MaskedDataset, validate
from .elasticnet import ElasticNetSpec, fit as enet_fit
from .learners import Forest, MiaTree, TreeParams, fit_cart_mia, fit_forest


@dataclass(frozen=True)
class FitLimits:
    max_outer: int = 20
    max_cycles: int = 10
    min_rel_improve: float = 1e-4

    def __post_init__(self):
        if self.max_outer < 1 or self.max_cycles < 1 or self.min_rel_improve < 0:
            raise ValueError("limits must be positive")


@dataclass(frozen=True)
class RegressorContract:
    """Factory for the downstream predictor.

    factory(X, y, seed) must return an object with predict(X) -> predictions,
    and must be deterministic given identical inputs and seed.
    """

    label: str  # linear | tree | forest
    factory: Callable[[np.ndarray, np.ndarray, int], object]


def linear_contract(spec: ElasticNetSpec | None = None) -> RegressorContract:
    spec = spec or ElasticNetSpec(lam=1e-4)

    def factory(X, y, seed):
        return enet_fit(X, y, spec)

    return RegressorContract("linear", factory)


def tree_contract(params: TreeParams | None = None) -> RegressorContract:
    params = params or TreeParams(max_depth=4)

    def factory(X, y, seed):
        ds = MaskedDataset(X, np.zeros_like(X, dtype=np.int8), y)
        tree = fit_cart_mia(ds, params)
        return _FullyObservedWrapper(tree)

    return RegressorContract("tree", factory)


def forest_contract(params: TreeParams | None = None) -> RegressorContract:
    base = params or TreeParams(max_depth=6, n_trees=50)

    def factory(X, y, seed):
        p = TreeParams(base.max_depth, base.min_leaf, base.n_trees, base.mtry,
                       seed, base.task)
        ds = MaskedDataset(X, np.zeros_like(X, dtype=np.int8), y)
        return _FullyObservedWrapper(fit_forest(ds, p))

    return RegressorContract("forest", factory)


class _FullyObservedWrapper:
    """Adapts a MIA tree or forest to predict on plain numeric matrices."""

    def __init__(self, model: MiaTree | Forest):
        self.model = model

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return self.model.predict(X, np.zeros_like(X, dtype=np.int8))


def impute_with(dataset: MaskedDataset, mu) -> np.ndarray:
    """Fill missing entries of X with the per-feature constants mu."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (dataset.d,):
        raise ValueError(f"mu length {mu.shape} != d={dataset.d}")
    if not np.all(np.isfinite(mu)):
        raise ValueError("non-finite imputation values")
    return np.where(dataset.M == 1, mu, dataset.X)


def mse_error(y, yhat) -> float:
    return float(np.mean((np.asarray(y) - np.asarray(yhat)) ** 2))


def auc_error(y, scores) -> float:
    """1 - AUC, midrank tie handling. Lower is better, matching mse_error."""
    from .bench import scaled_auc
    return 1.0 - (scaled_auc(y, scores) + 1.0) / 2.0


def coordinate_step(mu, j, sigma_j, predictor, dataset: MaskedDataset,
                    error_metric) -> tuple[int, float]:
    """Pick the best of mu_j + eps * sigma_j for eps in {-1, 0, +1}.

    Ties prefer 0, then -1, so a flat error surface leaves mu unchanged.
    """
    errors = {}
    for eps in (0, -1, 1):
        trial = np.array(mu, dtype=float)
        trial[j] += eps * sigma_j
        errors[eps] = error_metric(dataset.y,
                                   predictor.predict(impute_with(dataset, trial)))
    best = min((0, -1, 1), key=lambda e: errors[e])
    return best, errors[best]


@dataclass
class JointModel:
    mu: np.ndarray
    sigma: np.ndarray
    predictor: object
    contract_label: str
    error_trace: list[float]
    n_refits: int = 0
    cycles_per_iter: list[int] | None = None
    stop_reason: str = ""

    def predict(self, dataset_or_X, M=None) -> np.ndarray:
        if M is None:
            ds = dataset_or_X
            return self.predictor.predict(impute_with(ds, self.mu))
        X = np.atleast_2d(dataset_or_X)
        Xi = np.where(np.atleast_2d(M) == 1, self.mu, X)
        return self.predictor.predict(Xi)


def joint_fit(dataset: MaskedDataset, contract: RegressorContract,
              limits: FitLimits = FitLimits(), error_metric=mse_error,
              seed: int = 0) -> JointModel:
    """Alternating heuristic for the joint imputation/regression problem.

    Starts from observed-column means; each outer iteration refits the
    predictor once, then runs up to limits.max_cycles coordinate sweeps. A
    refit that would worsen training error is rolled back, so the recorded
    error trace is non-increasing.
    """
    validate(dataset)
    n, d = dataset.n, dataset.d
    obs = dataset.M == 0
    counts = obs.sum(axis=0)
    Xz = np.where(obs, np.where(dataset.M == 1, 0.0, dataset.X), 0.0)
    mu = np.where(counts > 0, Xz.sum(axis=0) / np.maximum(counts, 1), 0.0)
    sigma = np.empty(d)
    for j in range(d):
        vals = dataset.X[obs[:, j], j]
        if len(vals) == 0:
            sigma[j] = 1.0  # feature never observed: unit step from mu = 0
        elif len(vals) == 1:
            sigma[j] = 0.0
        else:
            sigma[j] = float(np.std(vals, ddof=1)) / np.sqrt(n)

    has_missing = counts < n
    predictor = contract.factory(impute_with(dataset, mu), dataset.y, seed)
    n_refits = 1
    current = error_metric(dataset.y, predictor.predict(impute_with(dataset, mu)))
    if not has_missing.any():
        # nothing to optimize: mu stays at the column means
        return JointModel(mu, sigma, predictor, contract.label, [current],
                          n_refits, [], "no_missing")
    trace = [current]
    cycles_per_iter: list[int] = []
    stop_reason = "max_outer"

    for outer in range(limits.max_outer):
        if outer > 0:
            candidate = contract.factory(impute_with(dataset, mu), dataset.y, seed)
            n_refits += 1
            cand_err = error_metric(dataset.y,
                                    candidate.predict(impute_with(dataset, mu)))
            if cand_err <= current:
                predictor = candidate
                current = cand_err
        iter_start = current
        cycles = 0
        for _ in range(limits.max_cycles):
            cycles += 1
            cycle_start = current
            changed = False
            for j in range(d):
                if sigma[j] == 0.0 or not has_missing[j]:
                    continue
                eps, err = coordinate_step(mu, j, sigma[j], predictor, dataset,
                                           error_metric)
                if eps != 0 and err < current:
                    mu[j] += eps * sigma[j]
                    current = err
                    changed = True
            if not changed:
                break
            rel = ((cycle_start - current) / abs(cycle_start)
                   if cycle_start != 0 else 0.0)
            if rel < limits.min_rel_improve:
                break
        cycles_per_iter.append(cycles)
        trace.append(current)
        rel_outer = ((iter_start - current) / abs(iter_start)
                     if iter_start != 0 else 0.0)
        if outer > 0 and rel_outer < limits.min_rel_improve:
            stop_reason = "min_rel_improve"
            break
    return JointModel(mu, sigma, predictor, contract.label, trace, n_refits,
                      cycles_per_iter, stop_reason)


def joint_model_to_json(model: JointModel) -> str:
    from . import learners
    doc = {"type": "joint", "contract": model.contract_label,
           "mu": list(map(float, model.mu)), "sigma": list(map(float, model.sigma)),
           "stop_reason": model.stop_reason}
    pred = model.predictor
    if isinstance(pred, _FullyObservedWrapper):
        inner = pred.model
        doc["predictor"] = json.loads(
            learners.tree_to_json(inner) if isinstance(inner, MiaTree)
            else learners.forest_to_json(inner))
    else:
        doc["predictor"] = {"type": "linear", "intercept": float(pred.intercept),
                            "coefficients": list(map(float, pred.coefficients))}
    return json.dumps(doc, indent=1)


def joint_model_from_json(text: str) -> JointModel:
    from . import learners
    from .elasticnet import LinearFit
    doc = json.loads(text)
    p = doc["predictor"]
    if p["type"] == "linear":
        predictor = LinearFit(p["intercept"], np.array(p["coefficients"]), [])
    elif p["type"] == "mia_tree":
        predictor = _FullyObservedWrapper(learners.tree_from_json(json.dumps(p)))
    else:
        predictor = _FullyObservedWrapper(learners.forest_from_json(json.dumps(p)))
    return JointModel(np.array(doc["mu"]), np.array(doc["sigma"]), predictor,
                      doc["contract"], [], stop_reason=doc.get("stop_reason", ""))
