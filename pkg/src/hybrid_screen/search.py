"""Cross-validated optimization of the tree-selector + shallow-network pipeline.

Every fold repeats the full preprocessing on its training rows only:
column cleaning, minority up-sampling, z-scoring, forest fitting and
threshold selection. The validation rows are only ever scored. Forests are
fitted once per fold and reused across trials, since a fold's forest does not
depend on the threshold or on network settings.

Seeds for folds, up-sampling, forests, networks and random-search draws are
all derived from one master seed, so trials can run in any order (or on a
thread pool) and produce identical records.
"""
import csv
import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from ._seeding import derive_seed, make_rng
from .data import (CLASSIFICATION, clean_features, stratified_kfold,
                   upsample_minority, zscore_fit)
from .exceptions import DataError, EmptySelectionError, SearchDegenerateError
from .forest import GINI, VARIANCE, ForestParams, fit_forest, select_features
from .snn import (ACTIVATIONS, INIT_MODES, LINEAR_OUTPUT, SIGMOID_OUTPUT,
                  SnnHyperparams, forward, train)

DEFAULT_THRESHOLD_GRID = (0.08, 0.09, 0.10, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8,
                          0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8,
                          1.9, 2.0, 2.1, 2.2, 2.3)
DEFAULT_DROPOUTS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

# Network settings held fixed while the threshold is tuned. 20 epochs at
# batch 512 is only ~20 Adam steps on a few hundred rows, too few at 1e-3.
FIXED_LEARNING_RATE = 0.03
FIXED_SNN_DEFAULTS = SnnHyperparams(hidden_layers=1, hidden_units=10, dropout=0.5,
                                    epochs=20, batch_size=512,
                                    init_mode="he_normal", activation="relu",
                                    learning_rate=FIXED_LEARNING_RATE)

N_ENSEMBLE_MEMBERS = 4

OBJECTIVES = ("auc_roc", "accuracy", "r2")


def check_grid(grid):
    grid = tuple(float(t) for t in grid)
    if not grid:
        raise ValueError("threshold grid is empty")
    if any(t <= 0 for t in grid):
        raise ValueError("threshold multipliers must be positive")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("threshold grid must be strictly increasing")
    return grid


@dataclass(frozen=True)
class SnnSearchSpace:
    epochs: tuple = (10, 20, 40, 50, 60, 200, 250, 400)
    dropout: tuple = DEFAULT_DROPOUTS
    batch_size: tuple = (32, 64, 128, 512, 1024, 2048, 4096, 8192)
    init_mode: tuple = INIT_MODES
    activation: tuple = ACTIVATIONS
    n_iter: int = 50

    def __post_init__(self):
        for name in ("epochs", "dropout", "batch_size", "init_mode", "activation"):
            if not getattr(self, name):
                raise ValueError(f"search dimension {name!r} is empty")
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")

    def sample(self, rng, base=FIXED_SNN_DEFAULTS):
        """Draw each dimension independently and uniformly."""
        pick = lambda values: values[int(rng.integers(len(values)))]  # noqa: E731
        return base.with_(epochs=int(pick(self.epochs)),
                          dropout=float(pick(self.dropout)),
                          batch_size=int(pick(self.batch_size)),
                          init_mode=str(pick(self.init_mode)),
                          activation=str(pick(self.activation)))

    def to_dict(self):
        return {"epochs": list(self.epochs), "dropout": list(self.dropout),
                "batch_size": list(self.batch_size),
                "init_mode": list(self.init_mode),
                "activation": list(self.activation), "n_iter": self.n_iter}

    @classmethod
    def from_dict(cls, d):
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        return cls(**kw)


@dataclass
class TrialRecord:
    threshold: float
    hp: SnnHyperparams
    fold_scores: tuple = ()
    fold_n_features: tuple = ()
    skipped: bool = False
    stage: str = ""
    n_estimators: int = 0
    wall_time: float = field(default=0.0, compare=False)

    @property
    def mean_score(self):
        if self.skipped:
            return float("nan")
        return float(np.mean(self.fold_scores))

    @property
    def n_features_selected(self):
        if not self.fold_n_features:
            return 0
        return int(round(float(np.mean(self.fold_n_features))))


@dataclass
class SearchOutcome:
    best_threshold: float
    best_hp: SnnHyperparams
    best_score: float
    trials: list
    mode: str = "series"

    def best_config(self):
        return {"threshold": self.best_threshold, "snn": self.best_hp.to_dict(),
                "cv_score": self.best_score, "mode": self.mode}


@dataclass
class FoldData:
    """Preprocessed material for one CV fold (training rows only fitted)."""

    index: int
    train_rows: np.ndarray
    val_rows: np.ndarray
    kept_columns: np.ndarray
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    importances: np.ndarray


def default_objective(task_kind):
    return "auc_roc" if task_kind == CLASSIFICATION else "r2"


def default_forest_params(task_kind, **overrides):
    kind = GINI if task_kind == CLASSIFICATION else VARIANCE
    return replace(ForestParams(impurity_kind=kind), **overrides)


def _output_kind(task_kind):
    return SIGMOID_OUTPUT if task_kind == CLASSIFICATION else LINEAR_OUTPUT


def _score(objective, pred, y):
    if objective == "auc_roc":
        return metrics.auc_roc(pred, y)
    if objective == "accuracy":
        return metrics.accuracy(pred, y)
    if objective == "r2":
        return metrics.r2(pred, y)
    raise ValueError(f"unknown objective {objective!r}")


def preprocess(train, seed, forest_params, n_jobs=1):
    """Clean, up-sample, scale and fit a forest on ``train``.

    The forest sees the cleaned (up-sampled) raw values, so its split
    cutoffs are in descriptor units; the network sees z-scores.
    Returns ``(kept, scaler, X_scaled, y, forest)``.
    """
    cleaned, kept = clean_features(train)
    if cleaned.task_kind == CLASSIFICATION:
        cleaned = upsample_minority(cleaned, seed=derive_seed(seed, "upsample"))
    scaler = zscore_fit(cleaned)
    fp = replace(forest_params, master_seed=derive_seed(seed, "forest"))
    forest = fit_forest(cleaned.matrix, cleaned.labels, fp, n_jobs=n_jobs)
    return kept, scaler, scaler.transform(cleaned.matrix), cleaned.labels, forest


def prepare_fold(table, folds, j, seed, forest_params, n_jobs=1):
    train_rows = np.flatnonzero(folds != j)
    val_rows = np.flatnonzero(folds == j)
    train = table.take(train_rows)
    if train.task_kind == CLASSIFICATION and len(np.unique(train.labels)) < 2:
        raise DataError(f"fold {j}: training portion has a single class")
    kept, scaler, X_train, y_train, forest = preprocess(
        train, derive_seed(seed, "fold", j), forest_params, n_jobs)
    X_val = scaler.transform(table.matrix[val_rows][:, kept])
    return FoldData(j, train_rows, val_rows, kept, X_train, y_train, X_val,
                    table.labels[val_rows], forest.importances())


def prepare_folds(table, k=5, seed=0, forest_params=None, folds=None, n_jobs=1):
    """Fold assignment plus per-fold preprocessing and forest importances."""
    if table.labels is None:
        raise DataError("cross-validation needs a labelled table")
    if forest_params is None:
        forest_params = default_forest_params(table.task_kind)
    if folds is None:
        folds = stratified_kfold(table, k, seed=derive_seed(seed, "folds"))
    k = int(folds.max()) + 1
    return [prepare_fold(table, folds, j, seed, forest_params, n_jobs)
            for j in range(k)]


def fit_fold_model(fold, t, hp, task_kind, seed):
    """Select features at ``t`` and train the fold network.

    Returns ``(selected_columns, model)``; raises EmptySelectionError.
    """
    selected = select_features(fold.importances, t)
    member = hp.with_(seed=derive_seed(seed, "snn", fold.index))
    model, _ = train(fold.X_train[:, selected], fold.y_train, member,
                     _output_kind(task_kind))
    return selected, model


def _fold_score(fold, t, hp, task_kind, seed, objective):
    if objective == "auc_roc" and len(np.unique(fold.y_val)) < 2:
        raise DataError(f"fold {fold.index}: validation portion has a single class")
    selected, model = fit_fold_model(fold, t, hp, task_kind, seed)
    pred = forward(model, fold.X_val[:, selected])
    return _score(objective, pred, fold.y_val), len(selected)


def evaluate_config(table, t, hp, k=5, seed=0, objective=None, forest_params=None,
                    folds=None, stage="", n_jobs=1):
    """Mean k-fold CV objective of the pipeline at threshold ``t``.

    ``folds`` may be a list of :class:`FoldData` from :func:`prepare_folds`
    to reuse forests across trials. A threshold that selects no feature in
    some fold yields a record with ``skipped=True``.
    """
    objective = objective or default_objective(table.task_kind)
    if folds is None:
        folds = prepare_folds(table, k, seed, forest_params, n_jobs=n_jobs)
    n_est = (forest_params or default_forest_params(table.task_kind)).n_estimators
    start = time.perf_counter()
    scores, counts = [], []
    try:
        for fold in folds:
            s, c = _fold_score(fold, t, hp, table.task_kind, seed, objective)
            scores.append(s)
            counts.append(c)
    except EmptySelectionError:
        return TrialRecord(float(t), hp, (), (), True, stage, n_est,
                           time.perf_counter() - start)
    return TrialRecord(float(t), hp, tuple(scores), tuple(counts), False, stage,
                       n_est, time.perf_counter() - start)


def _run_trials(table, configs, seed, objective, folds, forest_params, stage,
                n_jobs):
    def run(cfg):
        t, hp = cfg
        return evaluate_config(table, t, hp, seed=seed, objective=objective,
                               forest_params=forest_params, folds=folds,
                               stage=stage)
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            return list(pool.map(run, configs))
    return [run(c) for c in configs]


def _argmax(trials):
    """First trial with the strictly highest mean score (skips ignored)."""
    best = None
    for trial in trials:
        if trial.skipped:
            continue
        if best is None or trial.mean_score > best.mean_score:
            best = trial
    return best


def series_optimize(table, grid=DEFAULT_THRESHOLD_GRID, space=SnnSearchSpace(),
                    seed=0, k=5, objective=None, forest_params=None,
                    base_hp=FIXED_SNN_DEFAULTS, folds=None, n_jobs=1):
    """Two-stage search: threshold grid first, then random network search.

    Stage 1 scans ``grid`` with ``base_hp``; ties go to the smaller
    threshold. Stage 2 draws ``space.n_iter`` network configurations at that
    threshold; ties go to the earlier draw.
    """
    grid = check_grid(grid)
    if folds is None:
        folds = prepare_folds(table, k, seed, forest_params, n_jobs=n_jobs)
    stage1 = _run_trials(table, [(t, base_hp) for t in grid], seed, objective,
                         folds, forest_params, "threshold", n_jobs)
    best1 = _argmax(stage1)
    if best1 is None:
        raise SearchDegenerateError("every threshold selected no features")
    rng = make_rng(derive_seed(seed, "random_search"))
    draws = [space.sample(rng, base_hp) for _ in range(space.n_iter)]
    stage2 = _run_trials(table, [(best1.threshold, hp) for hp in draws], seed,
                         objective, folds, forest_params, "random", n_jobs)
    best2 = _argmax(stage2)
    if best2 is None:
        raise SearchDegenerateError("every network configuration was skipped")
    return SearchOutcome(best2.threshold, best2.hp, best2.mean_score,
                         stage1 + stage2, "series")


def parallel_optimize(table, grid=DEFAULT_THRESHOLD_GRID, dropouts=DEFAULT_DROPOUTS,
                      seed=0, k=5, objective=None, forest_params=None,
                      base_hp=FIXED_SNN_DEFAULTS, folds=None, n_jobs=1):
    """Joint grid over (threshold, dropout); ties go to the smaller threshold,
    then to the earlier dropout in ``dropouts``."""
    grid = check_grid(grid)
    if not dropouts:
        raise ValueError("dropout grid is empty")
    if folds is None:
        folds = prepare_folds(table, k, seed, forest_params, n_jobs=n_jobs)
    configs = [(t, base_hp.with_(dropout=float(d)))
               for t, d in itertools.product(grid, dropouts)]
    trials = _run_trials(table, configs, seed, objective, folds, forest_params,
                         "parallel", n_jobs)
    best = _argmax(trials)
    if best is None:
        raise SearchDegenerateError("every threshold selected no features")
    return SearchOutcome(best.threshold, best.hp, best.mean_score, trials,
                         "parallel")


def sweep_n_estimators(table, values, t, hp=FIXED_SNN_DEFAULTS, seed=0, k=5,
                       objective=None, forest_params=None, n_jobs=1):
    """CV score as a function of forest size. Returns (curve, trials)."""
    base = forest_params or default_forest_params(table.task_kind)
    curve, trials = [], []
    for v in values:
        if not 1 <= int(v):
            raise ValueError(f"n_estimators must be >= 1, got {v}")
        fp = replace(base, n_estimators=int(v))
        rec = evaluate_config(table, t, hp, k=k, seed=seed, objective=objective,
                              forest_params=fp, stage="n_estimators",
                              n_jobs=n_jobs)
        trials.append(rec)
        if not rec.skipped:
            curve.append((int(v), rec.mean_score))
    return curve, trials


def sweep_feature_count(table, grid=DEFAULT_THRESHOLD_GRID, hp=FIXED_SNN_DEFAULTS,
                        seed=0, k=5, objective=None, forest_params=None,
                        folds=None, n_jobs=1):
    """(n_selected, score) for each threshold; skipped thresholds omitted."""
    grid = check_grid(grid)
    if folds is None:
        folds = prepare_folds(table, k, seed, forest_params, n_jobs=n_jobs)
    trials = _run_trials(table, [(t, hp) for t in grid], seed, objective, folds,
                         forest_params, "feature_count", n_jobs)
    curve = [(r.n_features_selected, r.mean_score) for r in trials if not r.skipped]
    return curve, trials


def sweep_hidden_layers(table, depths=(1, 2, 3, 4, 5), t=1.0,
                        hp=FIXED_SNN_DEFAULTS, seed=0, k=5, objective=None,
                        forest_params=None, folds=None, n_jobs=1):
    """Score versus network depth, 10 units per hidden layer."""
    if folds is None:
        folds = prepare_folds(table, k, seed, forest_params, n_jobs=n_jobs)
    configs = [(t, hp.with_(hidden_layers=int(d), hidden_units=10)) for d in depths]
    trials = _run_trials(table, configs, seed, objective, folds, forest_params,
                         "depth", n_jobs)
    curve = [(r.hp.hidden_layers, r.mean_score) for r in trials if not r.skipped]
    return curve, trials


TRIAL_COLUMNS = ("trial", "stage", "threshold", "n_estimators", "hidden_layers",
                 "hidden_units", "dropout", "epochs", "batch_size", "init_mode",
                 "activation", "learning_rate", "skipped", "n_features_selected",
                 "mean_score", "fold_scores", "fold_n_features")


def _fmt(x):
    return repr(float(x))


def trial_rows(trials):
    for i, r in enumerate(trials):
        yield [i, r.stage, _fmt(r.threshold), r.n_estimators, r.hp.hidden_layers,
               r.hp.hidden_units, _fmt(r.hp.dropout), r.hp.epochs,
               r.hp.batch_size, r.hp.init_mode, r.hp.activation,
               _fmt(r.hp.learning_rate), int(r.skipped), r.n_features_selected,
               "" if r.skipped else _fmt(r.mean_score),
               ";".join(_fmt(s) for s in r.fold_scores),
               ";".join(str(c) for c in r.fold_n_features)]


def write_trials_csv(path_or_file, trials):
    """One row per trial; wall-clock time is left out so reruns are identical."""
    def dump(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        w.writerows(trial_rows(trials))
    if hasattr(path_or_file, "write"):
        dump(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            dump(fh)
