"""Training chain: feature selection, vertical bagging, fusion ensemble."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .bagging import RankedCandidate, iter_candidates, sample_subsets, select_top
from .config import BAGGING, PipelineConfig, derive_seed
from .errors import ConfigError, DataError
from .features import FeatureMatrix, SelectionReport, select_features
from .fusion import FusionEnsemble, build_ensemble

log = logging.getLogger(__name__)

TOP_COUNT = 3


@dataclass
class FittedFusion:
    selection: SelectionReport
    catalog: list[str]
    candidates: list[RankedCandidate]  # every candidate; only the top ones keep a model
    top: list[RankedCandidate]
    ensemble: FusionEnsemble

    @property
    def subsets(self) -> list[list[str]]:
        return [c.subset for c in self.top]


def build_catalog(report: SelectionReport, size: int) -> list[str]:
    """Selected features, topped up by descending |r| when fewer than ``size`` pass."""
    catalog = list(report.selected)
    if len(catalog) >= size:
        return catalog
    extra = [n for n in report.ranked() if n not in set(catalog)]
    needed = size - len(catalog)
    if len(extra) < needed:
        raise ConfigError(
            f"only {len(catalog) + len(extra)} usable features for max_features={size}")
    log.warning("%d features pass the correlation threshold; adding the next %d by |r|",
                len(catalog), needed)
    return catalog + extra[:needed]


def fit_fusion(train: FeatureMatrix, cfg: PipelineConfig, fold_key: Sequence[int] = (),
               report: Optional[SelectionReport] = None) -> FittedFusion:
    """Select features on ``train`` (unless a report is given) and build the ensemble."""
    if not train.labeled:
        raise DataError("training data must be fully labeled")
    if len(np.unique(train.y)) < 2:
        raise DataError("training data contains a single class")
    if report is None:
        report = select_features(train, cfg.variance_threshold, cfg.correlation_threshold)
    catalog = build_catalog(report, cfg.bagging.max_features)
    bag_cfg = replace(cfg.bagging, seed=derive_seed(cfg.seed, BAGGING, *fold_key) % 2 ** 63)
    subsets = sample_subsets(catalog, bag_cfg)

    # keep models only for the running top three; the rest are scored and dropped
    candidates: list[RankedCandidate] = []
    for cand in iter_candidates(train, subsets, cfg.forest, bag_cfg, cfg.n_jobs):
        candidates.append(cand)
        keep = {c.index for c in select_top(candidates, min(TOP_COUNT, len(candidates)))}
        for c in candidates:
            if c.index not in keep:
                c.model = None
    top = select_top(candidates, TOP_COUNT)

    source = "oob" if cfg.confusion_source == "oob" else "full"
    ensemble = build_ensemble([c.model for c in top], [train.project(c.subset) for c in top],
                              cfg.fusion, source)
    return FittedFusion(report, catalog, candidates, top, ensemble)


def ensemble_digest(fitted: FittedFusion) -> str:
    h = hashlib.sha256()
    for cand, pm in zip(fitted.top, fitted.ensemble.prob_matrices):
        h.update(repr(cand.subset).encode())
        h.update(repr(pm.tolist()).encode())
        for tree in cand.model.trees:
            for arr in (tree.feature, tree.threshold, tree.left, tree.right, tree.value):
                h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()
