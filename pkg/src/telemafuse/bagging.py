"""Vertical bagging: one forest per random feature subset, keep the best three."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, TelemafuseError
from .features import FeatureMatrix
from .forest import SEED_MOD, ForestHyperparams, ForestModel, labels_from_proba, predict_proba, train_forest

log = logging.getLogger(__name__)

MAX_REDRAWS = 100


@dataclass(frozen=True)
class BaggingConfig:
    max_features: int = 10
    max_iterations: int = 100
    ranking_mode: str = "oob"
    seed: int = 0

    def __post_init__(self):
        if self.max_features < 1:
            raise ConfigError("max_features must be positive")
        if self.max_iterations < 3:
            raise ConfigError("max_iterations must be at least 3 to select a top three")
        if self.ranking_mode not in ("oob", "resubstitution"):
            raise ConfigError(f"ranking_mode must be oob or resubstitution, got {self.ranking_mode!r}")


@dataclass
class RankedCandidate:
    index: int
    subset: list[str]
    model: ForestModel
    score: float


def sample_subsets(catalog: Sequence[str], cfg: BaggingConfig) -> list[list[str]]:
    """Draw ``cfg.max_iterations`` subsets of ``cfg.max_features`` distinct names.

    Subsets keep catalog order. A subset equal to an earlier one is redrawn up
    to 100 times before the duplicate is accepted.
    """
    catalog = list(catalog)
    F = cfg.max_features
    if len(catalog) < F:
        raise ConfigError(f"catalog has {len(catalog)} features, fewer than max_features={F}")
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed), spawn_key=(1,)))
    seen: set[tuple[int, ...]] = set()
    subsets = []
    duplicates = 0
    for _ in range(cfg.max_iterations):
        for _attempt in range(MAX_REDRAWS + 1):
            pick = tuple(sorted(rng.choice(len(catalog), size=F, replace=False).tolist()))
            if pick not in seen:
                break
        else:
            duplicates += 1
        seen.add(pick)
        subsets.append([catalog[i] for i in pick])
    if duplicates:
        log.warning("%d of %d subsets duplicate an earlier one after %d redraws",
                    duplicates, cfg.max_iterations, MAX_REDRAWS)
    return subsets


def _score(model: ForestModel, data: FeatureMatrix, mode: str) -> float:
    if mode == "oob":
        return model.oob_accuracy
    return float(np.mean(labels_from_proba(predict_proba(model, data)) == data.y))


def iter_candidates(dataset: FeatureMatrix, subsets: Sequence[Sequence[str]],
                    hp: ForestHyperparams, cfg: BaggingConfig,
                    n_jobs: int = 1) -> Iterator[RankedCandidate]:
    """Lazily train one forest per subset (seed ``cfg.seed + index``), in index order."""

    def one(i: int) -> RankedCandidate:
        data = dataset.project(subsets[i])
        try:
            model = train_forest(data, replace(hp, seed=(int(cfg.seed) + i) % SEED_MOD))
        except TelemafuseError as exc:
            raise type(exc)(f"candidate {i}: {exc}") from exc
        return RankedCandidate(i, list(subsets[i]), model, _score(model, data, cfg.ranking_mode))

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            yield from pool.map(one, range(len(subsets)))
    else:
        for i in range(len(subsets)):
            yield one(i)


def train_candidates(dataset: FeatureMatrix, subsets: Sequence[Sequence[str]],
                     hp: ForestHyperparams, cfg: BaggingConfig,
                     n_jobs: int = 1) -> list[RankedCandidate]:
    return list(iter_candidates(dataset, subsets, hp, cfg, n_jobs))


def select_top(candidates: Sequence[RankedCandidate], count: int = 3) -> list[RankedCandidate]:
    """Best ``count`` candidates by score; equal scores keep the lower index first."""
    if len(candidates) < count:
        raise ConfigError(f"need at least {count} candidates, got {len(candidates)}")
    return sorted(candidates, key=lambda c: (-c.score, c.index))[:count]


def write_candidates_report(candidates: Sequence[RankedCandidate], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "score", "features"])
        for c in candidates:
            w.writerow([c.index, repr(float(c.score)), ";".join(c.subset)])
