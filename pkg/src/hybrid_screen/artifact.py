"""JSON persistence for trained ensembles.

Artifacts are canonical JSON (sorted keys, fixed separators) and floats are
written with Python's shortest round-trip repr, so loading restores every
weight bit-for-bit and save -> load -> save is byte-stable.
"""
import json
import os
import tempfile

import numpy as np

from .data import TASK_KINDS, Scaler
from .ensemble import EnsembleModel
from .exceptions import ArtifactError
from .ranking import CutoffRule
from .snn import SnnHyperparams, SnnModel

FORMAT_VERSION = "hybrid-screen/1"


def _floats(a):
    return [float(x) for x in np.asarray(a, dtype=np.float64).ravel()]


def _matrix(a):
    return [_floats(row) for row in np.asarray(a, dtype=np.float64)]


def _nullable(a):
    return [None if np.isnan(x) else float(x) for x in np.asarray(a, dtype=np.float64)]


def ensemble_to_dict(ens, input_features=None, task_name="", rule=None):
    input_features = list(input_features or ens.kept_names)
    pos = {f: j for j, f in enumerate(input_features)}
    missing = [f for f in ens.kept_names if f not in pos]
    if missing:
        raise ArtifactError(f"kept features absent from input schema: {missing[:3]}")
    return {
        "format": FORMAT_VERSION,
        "task_name": task_name,
        "task_kind": ens.task_kind,
        "seed": int(ens.seed),
        "threshold": float(ens.threshold),
        "hyperparams": ens.hp.to_dict(),
        "input_features": input_features,
        "kept_columns": [pos[f] for f in ens.kept_names],
        "kept_names": list(ens.kept_names),
        "scaler": {"means": _floats(ens.scaler.means), "stds": _floats(ens.scaler.stds)},
        "selected_indices": [int(j) for j in ens.selected],
        "selected_names": ens.selected_names,
        "members": [{"weights": [_matrix(w) for w in m.weights],
                     "biases": [_floats(b) for b in m.biases]}
                    for m in ens.members],
        "output_kind": ens.members[0].output_kind,
        "importances": None if ens.importances is None else _floats(ens.importances),
        "root_cutoffs": None if ens.root_cutoffs is None else _nullable(ens.root_cutoffs),
        "cutoff_rule": None if rule is None else [
            {"feature": f, "cutoff": c} for f, c in zip(rule.features, rule.cutoffs)],
    }


def dumps(doc):
    return json.dumps(doc, sort_keys=True, indent=1, separators=(",", ": "),
                      allow_nan=False) + "\n"


def _require(doc, key):
    if key not in doc:
        raise ArtifactError(f"artifact ({doc.get('format', '?')}): missing field {key!r}")
    return doc[key]


def ensemble_from_dict(doc):
    """Rebuild an :class:`EnsembleModel`; returns ``(ensemble, doc)``."""
    if not isinstance(doc, dict):
        raise ArtifactError("artifact root must be a JSON object")
    version = doc.get("format")
    if version != FORMAT_VERSION:
        raise ArtifactError(
            f"unsupported artifact format {version!r}, expected {FORMAT_VERSION!r}")
    try:
        task_kind = _require(doc, "task_kind")
        if task_kind not in TASK_KINDS:
            raise ArtifactError(f"field 'task_kind': unknown value {task_kind!r}")
        inputs = _require(doc, "input_features")
        kept_cols = _require(doc, "kept_columns")
        kept_names = _require(doc, "kept_names")
        if [inputs[j] for j in kept_cols] != kept_names:
            raise ArtifactError("field 'kept_columns' inconsistent with 'kept_names'")
        selected = _require(doc, "selected_indices")
        if [kept_names[j] for j in selected] != _require(doc, "selected_names"):
            raise ArtifactError("field 'selected_indices' inconsistent with 'selected_names'")
        sc = _require(doc, "scaler")
        scaler = Scaler(np.array(sc["means"]), np.array(sc["stds"]))
        if scaler.n_features != len(kept_names):
            raise ArtifactError("field 'scaler': length differs from 'kept_names'")
        hp = SnnHyperparams.from_dict(_require(doc, "hyperparams"))
        output_kind = _require(doc, "output_kind")
        members = [SnnModel([np.array(w) for w in m["weights"]],
                            [np.array(b) for b in m["biases"]],
                            output_kind, hp.activation, hp.dropout)
                   for m in _require(doc, "members")]
        if not members:
            raise ArtifactError("field 'members': no networks stored")
        imp = doc.get("importances")
        cut = doc.get("root_cutoffs")
        ens = EnsembleModel(
            task_kind=task_kind, kept_names=list(kept_names), scaler=scaler,
            selected=np.array(selected, dtype=np.intp), members=members,
            threshold=float(_require(doc, "threshold")), hp=hp,
            seed=int(_require(doc, "seed")),
            importances=None if imp is None else np.array(imp, dtype=np.float64),
            root_cutoffs=None if cut is None else np.array(
                [np.nan if c is None else c for c in cut], dtype=np.float64))
    except ArtifactError:
        raise
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ArtifactError(f"artifact ({version}): invalid content: {exc}") from exc
    return ens, doc


def rule_from_doc(doc):
    items = doc.get("cutoff_rule")
    if not items:
        return None
    return CutoffRule([d["feature"] for d in items], [d["cutoff"] for d in items])


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, ens, input_features=None, task_name="", rule=None):
    atomic_write(path, dumps(ensemble_to_dict(ens, input_features, task_name, rule)))


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    except ValueError as exc:
        raise ArtifactError(f"artifact {path} is not valid JSON: {exc}") from exc
    return ensemble_from_dict(doc)
