"""Cross-validation harness: folds, accuracy, rank AUC, experiment report."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .config import BASELINE, FOLDS, PipelineConfig, derive_seed
from .errors import ConfigError, DataError
from .features import FeatureMatrix, select_features
from .forest import labels_from_proba, predict_proba, train_forest
from .fusion import member_probabilities, fuse_predict
from .pipeline import ensemble_digest, fit_fusion

log = logging.getLogger(__name__)


@dataclass
class FoldPlan:
    k: int
    assignment: dict
    split_mode: str
    seed: int

    def row_folds(self, dataset: FeatureMatrix) -> np.ndarray:
        if self.split_mode == "by-driver":
            return np.array([self.assignment[d] for d in dataset.driver_ids], dtype=np.int64)
        return np.array([self.assignment[i] for i in range(len(dataset))], dtype=np.int64)


def make_folds(dataset: FeatureMatrix, k: int = 5, split_mode: str = "by-driver",
               seed: int = 0) -> FoldPlan:
    """Shuffle groups (drivers or windows) with ``seed`` and deal them round-robin."""
    if len(dataset) == 0:
        raise DataError("cannot fold an empty dataset")
    if split_mode == "by-driver":
        groups = sorted(set(dataset.driver_ids.tolist()))
    elif split_mode == "by-window":
        groups = list(range(len(dataset)))
    else:
        raise ConfigError(f"unknown split mode {split_mode!r}")
    if len(groups) < k:
        raise DataError(f"{len(groups)} groups cannot fill {k} folds ({split_mode})")
    perm = np.random.default_rng(seed).permutation(len(groups))
    assignment = {groups[g]: pos % k for pos, g in enumerate(perm)}
    return FoldPlan(k, assignment, split_mode, seed)


def accuracy_score(truth, predicted) -> float:
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    if truth.shape != predicted.shape:
        raise DataError("truth and predictions differ in length")
    if truth.size == 0:
        raise DataError("accuracy of an empty sample is undefined")
    return float(np.mean(truth == predicted))


def auc_score(truth, scores) -> float:
    """Mann-Whitney AUC with class 1 positive; tied scores count one half."""
    truth = np.asarray(truth, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if truth.shape != scores.shape:
        raise DataError("truth and scores differ in length")
    pos = truth == 1
    n_pos = int(pos.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC is undefined when only one class is present")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


MODEL_ORDER = ("fused", "forest_1", "forest_2", "forest_3", "baseline")


@dataclass
class MetricsReport:
    k: int
    # model -> list of (accuracy, auc) per fold
    folds: dict = field(default_factory=dict)
    fold_digests: list = field(default_factory=list)

    def add(self, model: str, accuracy: float, auc: float) -> None:
        self.folds.setdefault(model, []).append((accuracy, auc))

    def mean(self, model: str, metric: str = "accuracy") -> float:
        return float(np.nanmean(self._column(model, metric)))

    def std(self, model: str, metric: str = "accuracy") -> float:
        return float(np.nanstd(self._column(model, metric)))

    def _column(self, model: str, metric: str) -> np.ndarray:
        col = {"accuracy": 0, "auc": 1}[metric]
        return np.array([row[col] for row in self.folds[model]], dtype=np.float64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "fold", "accuracy", "auc"])
        for model in self.folds:
            for i, (acc, auc) in enumerate(self.folds[model]):
                w.writerow([model, i, repr(float(acc)), repr(float(auc))])
            w.writerow([model, "mean", repr(self.mean(model)), repr(self.mean(model, "auc"))])
            w.writerow([model, "std", repr(self.std(model)), repr(self.std(model, "auc"))])
        return buf.getvalue()

    def to_table(self) -> str:
        width = max(len(m) for m in self.folds) + 2
        lines = [f"{'':<{width}}{'AUC':>16}{'Accuracy':>16}"]
        for model in self.folds:
            auc = f"{100 * self.mean(model, 'auc'):.2f} ± {100 * self.std(model, 'auc'):.2f}"
            acc = f"{100 * self.mean(model):.2f} ± {100 * self.std(model):.2f}"
            lines.append(f"{model:<{width}}{auc:>16}{acc:>16}")
        return "\n".join(lines) + "\n"


def _safe_auc(truth, scores, model, fold) -> float:
    if len(np.unique(truth)) < 2:
        log.warning("fold %d holds a single class; AUC for %s is undefined", fold, model)
        return math.nan
    return auc_score(truth, scores)


def run_experiment(dataset: FeatureMatrix, cfg: PipelineConfig) -> MetricsReport:
    """k-fold CV of the fused ensemble, its three forests and a full-feature forest.

    With per-fold selection, nothing fitted for a fold sees that fold's
    held-out rows.
    """
    if not dataset.labeled:
        raise DataError("evaluation needs a fully labeled dataset")
    plan = make_folds(dataset, cfg.folds, cfg.split_mode, derive_seed(cfg.seed, FOLDS))
    row_fold = plan.row_folds(dataset)
    global_report = None
    if cfg.selection == "global":
        global_report = select_features(dataset, cfg.variance_threshold, cfg.correlation_threshold)

    report = MetricsReport(cfg.folds)
    for fold in range(cfg.folds):
        train = dataset.rows(np.flatnonzero(row_fold != fold))
        test = dataset.rows(np.flatnonzero(row_fold == fold))
        if len(np.unique(train.y)) < 2:
            raise DataError(f"fold {fold}: training split contains a single class")
        fitted = fit_fusion(train, cfg, fold_key=(fold,), report=global_report)
        report.fold_digests.append(ensemble_digest(fitted))

        h = member_probabilities(fitted.ensemble, test)
        fused = [fuse_predict(fitted.ensemble, row) for row in h]
        report.add("fused", accuracy_score(test.y, [int(r.label) for r in fused]),
                   _safe_auc(test.y, [r.score for r in fused], "fused", fold))
        for rank in range(h.shape[1]):
            name = f"forest_{rank + 1}"
            report.add(name, accuracy_score(test.y, labels_from_proba(h[:, rank])),
                       _safe_auc(test.y, h[:, rank, 1], name, fold))

        usable = [n for n in train.feature_names if n not in set(fitted.selection.variance_dropped)]
        hp = replace(cfg.forest, seed=derive_seed(cfg.seed, BASELINE, fold) % 2 ** 63)
        base = train_forest(train.project(usable), hp, n_jobs=cfg.n_jobs)
        proba = predict_proba(base, test)
        report.add("baseline", accuracy_score(test.y, labels_from_proba(proba)),
                   _safe_auc(test.y, proba[:, 1], "baseline", fold))
        log.info("fold %d: fused acc %.4f", fold, report.folds["fused"][-1][0])
    return report
