"""Model artifact: one JSON document holding everything needed to predict.

Floats are stored as ``repr`` strings so a reload is bit-exact. The artifact
also stores a probe row with its fused output; loading re-fuses the probe and
refuses a file whose output no longer matches.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .config import PipelineConfig, from_ini, to_ini
from .errors import DataError, NumericError, OutputError
from .features import FeatureMatrix, SelectionReport
from .forest import ForestModel, canonical_order
from .fusion import FusionEnsemble, FusionParams, fuse_predict, member_probabilities
from .pipeline import FittedFusion

FORMAT_VERSION = 1


@dataclass
class ModelArtifact:
    config: PipelineConfig
    catalog: list[str]
    subsets: list[list[str]]
    ensemble: FusionEnsemble
    selection: Optional[SelectionReport]
    provenance: dict
    probe: dict

    @property
    def required_features(self) -> list[str]:
        seen: dict[str, None] = {}
        for subset in self.subsets:
            seen.update(dict.fromkeys(subset))
        return list(seen)


def dataset_digest(fm: FeatureMatrix) -> str:
    """Order-independent SHA-256 of names, values and labels."""
    order = canonical_order(fm)
    h = hashlib.sha256()
    h.update("\x1f".join(fm.feature_names).encode())
    h.update(np.ascontiguousarray(fm.X[order]).tobytes())
    h.update(np.ascontiguousarray(fm.y[order]).tobytes())
    return h.hexdigest()


def _probe(ensemble: FusionEnsemble, names: list[str], x: np.ndarray) -> dict:
    row = {n: float(v) for n, v in zip(names, x)}
    h = member_probabilities(ensemble, row)
    res = fuse_predict(ensemble, h)
    return {
        "x": {n: repr(v) for n, v in row.items()},
        "C0": repr(float(res.integrals[0])),
        "C1": repr(float(res.integrals[1])),
        "score": repr(float(res.score)),
        "label": res.label.text,
    }


def make_artifact(fitted: FittedFusion, train: FeatureMatrix, cfg: PipelineConfig) -> ModelArtifact:
    subsets = [list(c.subset) for c in fitted.top]
    needed = list(dict.fromkeys(n for s in subsets for n in s))
    probe_row = train.project(needed).X[canonical_order(train)[0]]
    return ModelArtifact(
        # thread count never changes the model, so it stays out of the file
        config=replace(cfg, n_jobs=1),
        catalog=list(fitted.catalog),
        subsets=subsets,
        ensemble=fitted.ensemble,
        selection=fitted.selection,
        provenance={"seed": int(cfg.seed), "dataset_digest": dataset_digest(train),
                    "n_train": len(train)},
        probe=_probe(fitted.ensemble, needed, probe_row),
    )


def to_json(art: ModelArtifact) -> str:
    sel = None
    if art.selection is not None:
        sel = {
            "variance_dropped": list(art.selection.variance_dropped),
            "correlations": {k: repr(v) for k, v in art.selection.correlations.items()},
            "selected": list(art.selection.selected),
        }
    doc = {
        "format_version": FORMAT_VERSION,
        "config": to_ini(art.config),
        "catalog": art.catalog,
        "selection": sel,
        "forests": [
            {"subset": subset, "model": model.to_dict()}
            for subset, model in zip(art.subsets, art.ensemble.models)
        ],
        "prob_matrices": [[[repr(v) for v in row] for row in pm.tolist()]
                          for pm in art.ensemble.prob_matrices],
        "fusion": {k: repr(float(v)) for k, v in asdict(art.ensemble.params).items()},
        "provenance": art.provenance,
        "probe": art.probe,
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def from_json(text: str, verify: bool = True) -> ModelArtifact:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"model file is not valid JSON: {exc}") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported model format_version {doc.get('format_version')!r}")
    try:
        models = [ForestModel.from_dict(f["model"]) for f in doc["forests"]]
        subsets = [list(f["subset"]) for f in doc["forests"]]
        pms = [np.array([[float(v) for v in row] for row in pm]) for pm in doc["prob_matrices"]]
        params = FusionParams(**{k: float(v) for k, v in doc["fusion"].items()})
        sel = doc.get("selection")
        selection = None if sel is None else SelectionReport(
            sel["variance_dropped"], {k: float(v) for k, v in sel["correlations"].items()},
            sel["selected"])
        art = ModelArtifact(
            config=from_ini(doc["config"]),
            catalog=list(doc["catalog"]),
            subsets=subsets,
            ensemble=FusionEnsemble(models, pms, params),
            selection=selection,
            provenance=doc["provenance"],
            probe=doc["probe"],
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"model file is missing or mangles field {exc}") from None
    if verify:
        names = list(art.probe["x"])
        x = np.array([float(art.probe["x"][n]) for n in names])
        again = _probe(art.ensemble, names, x)
        if again != art.probe:
            raise NumericError("model reload does not reproduce the stored probe prediction")
    return art


def save_artifact(art: ModelArtifact, path) -> None:
    try:
        Path(path).write_text(to_json(art), encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None


def load_artifact(path, verify: bool = True) -> ModelArtifact:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc.strerror}") from None
    return from_json(text, verify)
