"""Cross-task feature ranking and the cutoff prescreening rule.

A :class:`CutoffRule` places a compound in the safe zone when every listed
descriptor is strictly below its cutoff. Boundary values and missing values
count as suspect.
"""
import csv
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import CLASSIFICATION
from .exceptions import DataError

logger = logging.getLogger(__name__)

SAFE_ZONE = "SafeZone"
SUSPECT = "Suspect"


@dataclass
class TaskImportance:
    task_name: str
    feature_names: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.feature_names) != len(self.values):
            raise DataError(f"task {self.task_name!r}: {len(self.feature_names)} "
                            f"names for {len(self.values)} importances")


@dataclass
class FeatureScores:
    """Per-feature scores over a shared feature universe."""

    feature_names: list
    values: np.ndarray

    def order(self):
        """Indices by descending score, ties by position."""
        return np.lexsort((np.arange(len(self.values)), -self.values))

    def __getitem__(self, name):
        return float(self.values[self.feature_names.index(name)])


def _universe(tasks):
    if not tasks:
        raise DataError("need at least one task")
    names, seen = [], set()
    for task in tasks:
        for f in task.feature_names:
            if f not in seen:
                seen.add(f)
                names.append(f)
    return names


def _aligned(tasks, names):
    pos = {f: j for j, f in enumerate(names)}
    out = np.zeros((len(tasks), len(names)))
    for i, task in enumerate(tasks):
        for f, v in zip(task.feature_names, task.values):
            out[i, pos[f]] = v
    return out


def cumulative_gini(tasks):
    """Sum of importances across tasks; absent features contribute 0."""
    names = _universe(tasks)
    return FeatureScores(names, _aligned(tasks, names).sum(axis=0))


def average_rank(tasks):
    """Mean ordinal rank per feature (1 = most important within a task)."""
    names = _universe(tasks)
    grid = _aligned(tasks, names)
    ranks = np.empty_like(grid)
    idx = np.arange(len(names))
    for i, row in enumerate(grid):
        order = np.lexsort((idx, -row))
        ranks[i, order] = idx + 1
    return FeatureScores(names, ranks.mean(axis=0))


def top_k(cumulative, k, ranks=None):
    """Top ``k`` features as ``(name, cumulative_gini, average_rank)`` rows."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > len(cumulative.values):
        raise ValueError(f"k={k} exceeds the {len(cumulative.values)} features")
    rows = []
    for j in cumulative.order()[:k]:
        name = cumulative.feature_names[j]
        rank = ranks[name] if ranks is not None else math.nan
        rows.append((name, float(cumulative.values[j]), rank))
    return rows


def write_ranking_csv(path, cumulative, ranks):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "cumulative_gini", "average_rank"])
        for name, score, rank in top_k(cumulative, len(cumulative.values), ranks):
            w.writerow([name, repr(score), repr(float(rank))])


@dataclass
class CutoffRule:
    features: list
    cutoffs: list

    def __post_init__(self):
        self.features = [str(f) for f in self.features]
        self.cutoffs = [float(c) for c in self.cutoffs]
        if len(self.features) != len(self.cutoffs):
            raise DataError("rule needs one cutoff per feature")
        if len(set(self.features)) != len(self.features):
            raise DataError("rule features must be unique")

    def to_json(self):
        return json.dumps([{"feature": f, "cutoff": c}
                           for f, c in zip(self.features, self.cutoffs)],
                          indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            items = json.loads(text)
            return cls([d["feature"] for d in items], [d["cutoff"] for d in items])
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"malformed cutoff rule: {exc}") from exc

    def extend(self, feature, cutoff):
        return CutoffRule(self.features + [feature], self.cutoffs + [cutoff])


def build_cutoff_rule(models, features):
    """Average each feature's shallowest-split cutoff over the models using it.

    ``models`` are objects with ``root_cutoff_mean(index)`` and
    ``feature_names_in_`` (fitted :class:`ExtraTreesForest`), or mappings
    from feature name to cutoff (``None``/NaN where unused).
    """
    lookups = [_cutoff_lookup(m) for m in models]
    cutoffs = []
    for f in features:
        values = [v for lk in lookups if (v := lk(f)) is not None]
        if not values:
            raise DataError(f"feature {f!r} is not split on by any model")
        cutoffs.append(float(np.mean(values)))
    return CutoffRule(list(features), cutoffs)


def _cutoff_lookup(model):
    if isinstance(model, dict):
        def lookup(name):
            v = model.get(name)
            return None if v is None or np.isnan(v) else float(v)
        return lookup
    names = [str(n) for n in getattr(model, "feature_names_in_", [])]

    def lookup(name):
        if name not in names:
            return None
        return model.root_cutoff_mean(names.index(name))
    return lookup


def _rule_columns(table, rule):
    missing = [f for f in rule.features if f not in table.feature_names]
    if missing:
        raise DataError(f"rule features not in table: {', '.join(missing)}")
    cols = [table.feature_names.index(f) for f in rule.features]
    return table.matrix[:, cols]


def safe_zone_mask(table, rule):
    values = _rule_columns(table, rule)
    with np.errstate(invalid="ignore"):
        below = values < np.asarray(rule.cutoffs)
    # NaN compares False, so missing values already land in Suspect
    return np.all(below, axis=1)


def prescreen_classify(values, rule):
    """SafeZone iff every rule feature is strictly below its cutoff.

    ``values`` maps feature name to value (or is a sequence aligned with
    ``rule.features``).
    """
    if isinstance(values, dict):
        missing = [f for f in rule.features if f not in values]
        if missing:
            raise DataError(f"rule features missing from row: {', '.join(missing)}")
        values = [values[f] for f in rule.features]
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        logger.warning("non-finite rule feature value; classifying as Suspect")
        return SUSPECT
    return SAFE_ZONE if np.all(values < np.asarray(rule.cutoffs)) else SUSPECT


def prescreen_fractions(table, rule):
    """Fractions of all toxic and all nontoxic compounds in the safe zone."""
    if table.task_kind != CLASSIFICATION or table.labels is None:
        raise DataError("prescreen fractions need a labelled classification table")
    inside = safe_zone_mask(table, rule)
    toxic = table.labels == 1.0
    n_toxic, n_non = int(toxic.sum()), int((~toxic).sum())
    if n_toxic == 0 or n_non == 0:
        raise DataError("prescreen fractions need both toxic and nontoxic compounds")
    return (int(np.sum(inside & toxic)) / n_toxic,
            int(np.sum(inside & ~toxic)) / n_non)
