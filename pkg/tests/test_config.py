from dataclasses import replace

import pytest

from telemafuse.config import (PipelineConfig, SynthSpec, derive_seed, from_ini, load_config,
                               save_config, to_ini)
from telemafuse.errors import ConfigError


def test_defaults():
    cfg = PipelineConfig()
    assert (cfg.bagging.max_features, cfg.bagging.max_iterations) == (10, 100)
    assert (cfg.fusion.w1, cfg.fusion.w2, cfg.fusion.epsilon) == (0.9, 0.6, 1e-4)
    assert cfg.correlation_threshold == 0.1
    assert cfg.folds == 5
    assert cfg.window.length_s == 256


def test_round_trip_defaults():
    cfg = PipelineConfig()
    assert from_ini(to_ini(cfg)) == cfg


def test_round_trip_changed(tmp_path):
    cfg = PipelineConfig(seed=17).fidelity_paper()
    cfg = replace(cfg, variance_threshold=0.25, n_jobs=3,
                  forest=replace(cfg.forest, n_trees=33, max_depth=7, split_features=4),
                  synth=replace(cfg.synth, separation=0.0, duration_s=600, seed=17))
    p = tmp_path / "c.ini"
    save_config(cfg, p)
    back = load_config(p)
    assert back == cfg
    assert to_ini(back) == to_ini(cfg)


def test_fidelity_switches():
    cfg = PipelineConfig().fidelity_paper()
    assert cfg.bagging.ranking_mode == "resubstitution"
    assert cfg.confusion_source == "resubstitution"
    assert cfg.selection == "global"
    assert cfg.split_mode == "by-window"


@pytest.mark.parametrize("text", [
    "[run]\nseed = 1\nbogus = 2\n",
    "[nonsense]\na = 1\n",
    "[bagging]\nmax_iterations = 2\n",
    "[fusion]\nw1 = 0\n",
    "[evaluation]\nsplit_mode = sideways\n",
    "[forest]\nn_trees = many\n",
    "not an ini file",
])
def test_bad_config(text):
    with pytest.raises(ConfigError):
        from_ini(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_partial_file_keeps_defaults():
    cfg = from_ini("[bagging]\nmax_iterations = 50\n[run]\nseed = 42\n")
    assert cfg.bagging.max_iterations == 50
    assert cfg.seed == cfg.synth.seed == 42
    assert cfg.fusion == PipelineConfig().fusion


def test_derived_seeds_are_distinct_and_stable():
    seeds = {derive_seed(42, k) for k in range(4)} | {derive_seed(42, 2, f) for f in range(5)}
    assert len(seeds) == 9
    assert derive_seed(42, 1) == derive_seed(42, 1)


def test_synth_spec_validation():
    with pytest.raises(ConfigError):
        SynthSpec(n_drivers_per_class=0)
    with pytest.raises(ConfigError):
        SynthSpec(channels={})
