"""Choquet-integral fusion of classifier outputs under a Sugeno lambda-measure.

Classifier indices are 0-based throughout. Each classifier's worth for a
class starts from its training hit rate on that class and is then reduced
per sample when it disagrees with the other classifiers.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, DomainError, NumericError
from .features import FeatureMatrix
from .forest import N_CLASSES, ForestModel, labels_from_proba, predict_proba
from .ingest import BinaryLabel

log = logging.getLogger(__name__)

LAMBDA_TOL = 1e-10


@dataclass(frozen=True)
class FusionParams:
    w1: float = 0.9
    w2: float = 0.6
    epsilon: float = 0.0001

    def __post_init__(self):
        if not (0 < self.w1 <= 1 and 0 < self.w2 <= 1):
            raise ConfigError("w1 and w2 must lie in (0, 1]")
        if not 0 < self.epsilon < 0.01:
            raise ConfigError("epsilon must lie in (0, 0.01)")


def confusion_from_labels(truth, predicted, n_classes: int = N_CLASSES) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if len(truth) == 0:
        raise DataError("confusion matrix needs at least one sample")
    if truth.shape != predicted.shape:
        raise DataError("truth and predictions differ in length")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth, predicted), 1)
    return cm


def confusion_matrix(model: ForestModel, eval_set: FeatureMatrix, source: str = "full") -> np.ndarray:
    """Confusion matrix of ``model`` on ``eval_set``.

    ``source="oob"`` uses the model's stored out-of-bag probabilities, which
    are only meaningful when ``eval_set`` is the matrix the model was trained on
    (rows never out-of-bag are skipped). ``source="full"`` predicts every row.
    """
    if len(eval_set) == 0:
        raise DataError("confusion matrix needs a non-empty evaluation set")
    if not eval_set.labeled:
        raise DataError("evaluation set must be labeled")
    if source == "oob":
        proba = model.oob_proba
        if proba is None or len(proba) != len(eval_set):
            raise DataError("model carries no out-of-bag predictions for this data")
        keep = ~np.isnan(proba).any(axis=1)
        if not keep.any():
            raise DataError("no sample was ever out-of-bag")
        return confusion_from_labels(eval_set.y[keep], labels_from_proba(proba[keep]))
    if source != "full":
        raise ConfigError(f"unknown confusion source {source!r}")
    return confusion_from_labels(eval_set.y, labels_from_proba(predict_proba(model, eval_set)))


def probability_matrix(cm) -> np.ndarray:
    """Row-normalize a confusion matrix. Empty rows become uniform."""
    cm = np.asarray(cm, dtype=np.float64)
    rows = cm.sum(axis=1)
    out = np.empty_like(cm)
    for r in range(cm.shape[0]):
        if rows[r] == 0:
            log.warning("confusion row %d is empty; using a uniform row", r)
            out[r] = 1.0 / cm.shape[1]
        else:
            out[r] = cm[r] / rows[r]
    return out


def _residual(lam: float, g: Sequence[float]) -> float:
    return math.prod(1.0 + lam * gi for gi in g) - (1.0 + lam)


def _newton(lam: float, g: Sequence[float]) -> float:
    terms = [1.0 + lam * gi for gi in g]
    prod = math.prod(terms)
    deriv = sum(gi * prod / t for gi, t in zip(g, terms)) - 1.0
    if deriv == 0.0 or not math.isfinite(deriv):
        return lam
    return lam - (prod - (1.0 + lam)) / deriv


def solve_lambda(densities: Sequence[float]) -> float:
    """The unique lambda > -1 with prod(1 + lambda*g_i) = 1 + lambda.

    Bisection on a sign-changing bracket, then a Newton polish that is kept
    only when it stays in the bracket and lowers the residual.
    """
    g = [float(x) for x in densities]
    if len(g) < 2:
        raise DomainError("need at least two densities")
    if not all(0.0 < x < 1.0 for x in g):
        raise DomainError(f"densities must lie in (0, 1): {g}")
    total = math.fsum(g)
    if abs(total - 1.0) <= 1e-12:
        return 0.0

    if total > 1.0:
        lo, hi = -1.0 + 1e-12, -1e-12
    else:
        lo, hi = 1e-12, 1.0
        while _residual(hi, g) <= 0.0:
            hi *= 2.0
            if not math.isfinite(hi):
                raise NumericError("could not bracket lambda")
    r_lo, r_hi = _residual(lo, g), _residual(hi, g)
    if (r_lo > 0) == (r_hi > 0):
        # root closer to an endpoint than the bracket margin
        return lo if abs(r_lo) < abs(r_hi) else hi

    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        r_mid = _residual(mid, g)
        if r_mid == 0.0:
            lo = hi = mid
            break
        if (r_mid > 0) == (r_lo > 0):
            lo, r_lo = mid, r_mid
        else:
            hi, r_hi = mid, r_mid
    best = lo if abs(r_lo) <= abs(r_hi) else hi
    best_res = abs(_residual(best, g))
    lower, upper = min(lo, hi), max(lo, hi)
    for _ in range(3):
        cand = _newton(best, g)
        if not (lower - abs(lower) * 1e-12 <= cand <= upper + abs(upper) * 1e-12):
            break
        res = abs(_residual(cand, g))
        if res >= best_res:
            break
        best, best_res = cand, res

    if best_res > LAMBDA_TOL * max(1.0, abs(1.0 + best)):
        raise NumericError(f"lambda residual {best_res:.3g} too large for densities {g}")
    return best


@dataclass(frozen=True)
class FuzzyMeasure:
    """Sugeno lambda-measure induced by per-classifier densities."""

    densities: tuple
    lam: float

    @classmethod
    def from_densities(cls, densities: Iterable[float]) -> "FuzzyMeasure":
        g = tuple(float(x) for x in densities)
        return cls(g, solve_lambda(g))

    def __len__(self):
        return len(self.densities)

    def __call__(self, subset: Iterable[int]) -> float:
        return measure_of_subset(self, subset)


def measure_of_subset(measure: FuzzyMeasure, subset: Iterable[int]) -> float:
    """g(A) by folding g(A + {x}) = g(A) + g_x + lambda * g(A) * g_x."""
    value = 0.0
    for i in sorted(set(subset)):
        if not 0 <= i < len(measure.densities):
            raise IndexError(f"classifier index {i} out of range")
        gx = measure.densities[i]
        value = value + gx + measure.lam * value * gx
    return value


def choquet_integral(f: Sequence[float], measure: FuzzyMeasure) -> float:
    """Choquet integral of supports ``f`` w.r.t. ``measure``.

    Uses the ascending-sort form sum_k (f_(k) - f_(k-1)) * g(A_(k)), where
    A_(k) holds the classifiers from position k upwards. Equal supports are
    ordered by classifier index. The first term uses g(X) = 1 exactly, so a
    constant support vector integrates to itself.
    """
    f = [float(v) for v in f]
    n = len(f)
    if n != len(measure.densities):
        raise DomainError("support vector and measure differ in size")
    if not all(0.0 <= v <= 1.0 for v in f):
        raise DomainError(f"supports must lie in [0, 1]: {f}")
    order = sorted(range(n), key=lambda i: (f[i], i))
    lam = measure.lam
    tail = [0.0] * (n + 1)
    for k in range(n - 1, -1, -1):
        gx = measure.densities[order[k]]
        tail[k] = tail[k + 1] + gx + lam * tail[k + 1] * gx
    tail[0] = 1.0  # the whole set has measure 1 by definition; drop solver round-off
    total, prev = 0.0, 0.0
    for k in range(n):
        v = f[order[k]]
        total += (v - prev) * tail[k]
        prev = v
    return total


@dataclass
class FusionEnsemble:
    """Selected forests, their training probability matrices, and fusion weights."""

    models: Optional[list[ForestModel]]
    prob_matrices: list[np.ndarray]
    params: FusionParams = field(default_factory=FusionParams)

    def __post_init__(self):
        self.prob_matrices = [np.asarray(pm, dtype=np.float64) for pm in self.prob_matrices]
        if len(self.prob_matrices) < 2:
            raise ConfigError("fusion needs at least two classifiers")
        if self.models is not None and len(self.models) != len(self.prob_matrices):
            raise ConfigError("one probability matrix per model is required")

    @property
    def size(self) -> int:
        return len(self.prob_matrices)


def adaptive_densities(ensemble: FusionEnsemble, predicted: Sequence[int], j: int) -> np.ndarray:
    """Per-classifier class-j densities adjusted for this sample's disagreements.

    Starting from classifier i's hit rate on class j, every other classifier m
    that predicted a different class multiplies in two penalties:
    delta, how often i itself confuses true class j with m's claim, and gamma,
    the ratio of m's to i's rate on that same confusion cell when i's is higher.
    """
    pms = ensemble.prob_matrices
    eps, w1, w2 = ensemble.params.epsilon, ensemble.params.w1, ensemble.params.w2
    P = len(pms)
    if len(predicted) != P:
        raise DomainError("one predicted label per classifier is required")
    out = np.empty(P)
    for i in range(P):
        pii = pms[i]
        hit = pii[j, j]
        delta_prod = 1.0
        gamma_prod = 1.0
        for m in range(P):
            if m == i or predicted[i] == predicted[m]:
                continue
            claim = predicted[m]
            if hit == 0.0:
                delta = eps
            else:
                delta = min(1.0, max(eps, (hit - pii[j, claim]) / hit))
            e_i, e_m = pii[j, claim], pms[m][j, claim]
            if e_i <= e_m:
                gamma = 1.0
            elif e_m > 0.0:
                gamma = e_m / e_i
            else:
                gamma = eps
            delta_prod *= delta
            gamma_prod *= gamma
        g = hit * delta_prod ** w1 * gamma_prod ** w2
        out[i] = min(1.0 - eps, max(eps, g))
    return out


class FusionResult(NamedTuple):
    label: BinaryLabel
    integrals: tuple
    score: float
    predicted: tuple
    densities: np.ndarray  # (n_classes, n_classifiers)
    lambdas: tuple


def fuse_predict(ensemble: FusionEnsemble, probs) -> FusionResult:
    """Fuse one sample's per-classifier probability vectors (rows of ``probs``)."""
    h = np.asarray(probs, dtype=np.float64)
    if h.shape != (ensemble.size, N_CLASSES):
        raise DomainError(f"expected probabilities of shape {(ensemble.size, N_CLASSES)}")
    if not np.isfinite(h).all() or (h < 0).any() or (h > 1).any():
        raise DomainError("probabilities must lie in [0, 1]")
    if np.abs(h.sum(axis=1) - 1.0).max() > 1e-6:
        raise DomainError("each probability vector must sum to 1")
    predicted = tuple(int(k) for k in labels_from_proba(h))
    dens = np.empty((N_CLASSES, ensemble.size))
    lams, integrals = [], []
    for j in range(N_CLASSES):
        dens[j] = adaptive_densities(ensemble, predicted, j)
        measure = FuzzyMeasure.from_densities(dens[j])
        lams.append(measure.lam)
        integrals.append(choquet_integral(h[:, j], measure))
    label = BinaryLabel(int(np.argmax(integrals)))
    total = integrals[0] + integrals[1]
    score = integrals[1] / total if total > 0 else 0.5
    return FusionResult(label, tuple(integrals), score, predicted, dens, tuple(lams))


def member_probabilities(ensemble: FusionEnsemble, data) -> np.ndarray:
    """(n_samples, n_classifiers, n_classes) stack of member forest outputs.

    A single mapping row gives (n_classifiers, n_classes).
    """
    if ensemble.models is None:
        raise ConfigError("ensemble has no models attached")
    per_model = [predict_proba(m, data) for m in ensemble.models]
    return np.stack(per_model, axis=0 if per_model[0].ndim == 1 else 1)


def fuse_matrix(ensemble: FusionEnsemble, data) -> list[FusionResult]:
    return [fuse_predict(ensemble, h) for h in member_probabilities(ensemble, data)]


def build_ensemble(models: Sequence[ForestModel], train_sets: Sequence[FeatureMatrix],
                   params: FusionParams = FusionParams(), source: str = "oob") -> FusionEnsemble:
    """Attach probability matrices computed on each model's training matrix."""
    pms = [probability_matrix(confusion_matrix(m, fm, source)) for m, fm in zip(models, train_sets)]
    return FusionEnsemble(list(models), pms, params)


def write_diagnostics(results: Sequence[FusionResult], path, ids: Optional[Sequence[str]] = None):
    """Per-sample fusion trace as CSV."""
    if not results:
        raise DataError("nothing to write")
    P = len(results[0].predicted)
    header = ["row"] + [f"pred_{i}" for i in range(P)]
    header += [f"g_c{j}_{i}" for j in range(N_CLASSES) for i in range(P)]
    header += [f"lambda_c{j}" for j in range(N_CLASSES)] + ["C0", "C1", "label", "score"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, r in enumerate(results):
            w.writerow(
                [ids[k] if ids is not None else k]
                + list(r.predicted)
                + [repr(float(v)) for v in r.densities.ravel()]
                + [repr(float(v)) for v in r.lambdas]
                + [repr(float(v)) for v in r.integrals]
                + [r.label.text, repr(float(r.score))]
            )
