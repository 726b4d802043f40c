import logging

import numpy as np
import pytest

from telemafuse.bagging import (BaggingConfig, RankedCandidate, sample_subsets, select_top,
                                train_candidates)
from telemafuse.errors import ConfigError
from telemafuse.features import FeatureMatrix
from telemafuse.forest import ForestHyperparams

from conftest import gaussian_matrix

CATALOG = [f"c{i:02d}" for i in range(15)]


def test_subset_shape_and_determinism():
    cfg = BaggingConfig(max_features=10, max_iterations=100, seed=5)
    a = sample_subsets(CATALOG, cfg)
    assert a == sample_subsets(CATALOG, cfg)
    assert len(a) == 100
    for s in a:
        assert len(s) == len(set(s)) == 10
        assert s == sorted(s, key=CATALOG.index)
    assert a != sample_subsets(CATALOG, BaggingConfig(10, 100, seed=6))


def test_forced_duplicates_warn(caplog):
    with caplog.at_level(logging.WARNING):
        subs = sample_subsets(CATALOG[:10], BaggingConfig(10, 5))
    assert all(s == CATALOG[:10] for s in subs)
    assert "duplicate" in caplog.text


def test_catalog_too_small():
    with pytest.raises(ConfigError):
        sample_subsets(CATALOG[:4], BaggingConfig(5, 10))


def test_k_below_three():
    with pytest.raises(ConfigError):
        BaggingConfig(max_iterations=2)


def cands(scores):
    return [RankedCandidate(i, [], None, s) for i, s in enumerate(scores)]


@pytest.mark.parametrize("scores, expected", [
    ([0.6, 0.9, 0.7], [1, 2, 0]),
    ([0.8, 0.8, 0.5, 0.8], [0, 1, 3]),
])
def test_select_top(scores, expected):
    assert [c.index for c in select_top(cands(scores))] == expected


def test_select_top_needs_enough():
    with pytest.raises(ConfigError):
        select_top(cands([0.1, 0.2]))


def test_train_candidates_scores(blobs):
    cfg = BaggingConfig(max_features=2, max_iterations=3, seed=1)
    subsets = sample_subsets(blobs.feature_names, cfg)
    hp = ForestHyperparams(n_trees=10)
    out = train_candidates(blobs, subsets, hp, cfg)
    assert [c.index for c in out] == [0, 1, 2]
    assert all(0.0 <= c.score <= 1.0 for c in out)
    assert [c.score for c in out] == [c.score for c in train_candidates(blobs, subsets, hp, cfg)]
    assert [c.model.seed for c in out] == [1, 2, 3]
    threaded = train_candidates(blobs, subsets, hp, cfg, n_jobs=3)
    assert [c.score for c in threaded] == [c.score for c in out]


def test_separating_subset_scores_one_on_resubstitution():
    y = np.r_[np.zeros(20, int), np.ones(20, int)]
    rng = np.random.default_rng(0)
    X = np.column_stack([y * 10.0 + rng.normal(size=40), rng.normal(size=40)])
    data = FeatureMatrix(X, y, ["sep", "noise"], [f"t{i}" for i in range(40)], ["d"] * 40)
    cfg = BaggingConfig(max_features=1, max_iterations=3, ranking_mode="resubstitution")
    out = train_candidates(data, [["sep"], ["noise"], ["sep"]], ForestHyperparams(n_trees=10), cfg)
    assert out[0].score == 1.0 and out[2].score == 1.0
