"""Final model: one preprocessing/selection pass, four averaged networks."""
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._seeding import derive_seed
from .data import CLASSIFICATION, REGRESSION, DescriptorTable, Scaler
from .exceptions import DataError
from .forest import select_features
from .search import (FIXED_LEARNING_RATE, FIXED_SNN_DEFAULTS, N_ENSEMBLE_MEMBERS,
                     _output_kind, default_forest_params, preprocess)
from .snn import SnnHyperparams, forward, train


@dataclass
class EnsembleModel:
    """Everything needed to score a raw descriptor table.

    ``kept_names`` are the input columns surviving cleaning (the scaler is
    fitted on these); ``selected`` indexes into ``kept_names``.
    """

    task_kind: str
    kept_names: list
    scaler: Scaler
    selected: np.ndarray
    members: list
    threshold: float
    hp: SnnHyperparams
    seed: int
    importances: np.ndarray = None
    root_cutoffs: np.ndarray = None
    forest: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.selected = np.asarray(self.selected, dtype=np.intp)
        dims = {m.input_dim for m in self.members}
        if len(dims) != 1 or dims != {len(self.selected)}:
            raise DataError(f"member input sizes {sorted(dims)} do not match "
                            f"{len(self.selected)} selected features")

    @property
    def selected_names(self):
        return [self.kept_names[j] for j in self.selected]

    def network_input(self, table):
        """Project by column name, scale, and keep the selected features."""
        raw = table.project_by_name(self.kept_names).matrix
        return self.scaler.transform(raw)[:, self.selected]

    def member_outputs(self, table):
        X = self.network_input(table)
        return np.vstack([forward(m, X) for m in self.members])

    def predict(self, table):
        return predict(self, table)


def train_final(table, threshold, hp=FIXED_SNN_DEFAULTS, master_seed=0,
                forest_params=None, n_members=N_ENSEMBLE_MEMBERS,
                member_seeds=None, n_jobs=1, keep_forest=False):
    """Fit the deployable ensemble on the merged train+CV table.

    Members differ only in their derived seeds; pass ``member_seeds`` to
    override them.
    """
    if table.labels is None:
        raise DataError("final training needs a labelled table")
    if forest_params is None:
        forest_params = default_forest_params(table.task_kind)
    kept, scaler, X, y, forest = preprocess(
        table, derive_seed(master_seed, "final"), forest_params, n_jobs)
    importances = forest.importances()
    selected = select_features(importances, threshold)
    if member_seeds is None:
        member_seeds = [derive_seed(master_seed, "member", i) for i in range(n_members)]
    members = [train(X[:, selected], y, hp.with_(seed=int(s)),
                     _output_kind(table.task_kind))[0] for s in member_seeds]
    return EnsembleModel(
        task_kind=table.task_kind,
        kept_names=[table.feature_names[j] for j in kept],
        scaler=scaler, selected=selected, members=members,
        threshold=float(threshold), hp=hp, seed=int(master_seed),
        importances=importances, root_cutoffs=forest.root_cutoff_table(),
        forest=forest if keep_forest else None)


def predict(ensemble, table):
    """Arithmetic mean of the member outputs for every compound."""
    return ensemble.member_outputs(table).mean(axis=0)


class _HybridBase(BaseEstimator):
    _task_kind = None

    def __init__(self, threshold=1.0, hidden_layers=1, hidden_units=10,
                 dropout=0.5, epochs=20, batch_size=512, init_mode="he_normal",
                 activation="relu", learning_rate=FIXED_LEARNING_RATE,
                 n_estimators=1000,
                 n_members=N_ENSEMBLE_MEMBERS, random_state=0, n_jobs=1):
        self.threshold = threshold
        self.hidden_layers = hidden_layers
        self.hidden_units = hidden_units
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.init_mode = init_mode
        self.activation = activation
        self.learning_rate = learning_rate
        self.n_estimators = n_estimators
        self.n_members = n_members
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _table(self, X, y=None):
        names = [str(c) for c in getattr(X, "columns", [])] or None
        if y is None:
            X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan")
        else:
            X, y = check_X_y(X, y, dtype=np.float64, ensure_all_finite="allow-nan",
                             y_numeric=True)
        if names is None:
            names = [f"x{j}" for j in range(X.shape[1])]
        return DescriptorTable([str(i) for i in range(X.shape[0])], names, X, y,
                               self._task_kind)

    def _fit(self, X, y):
        table = self._table(X, y)
        hp = SnnHyperparams(self.hidden_layers, self.hidden_units, self.dropout,
                            self.epochs, self.batch_size, self.init_mode,
                            self.activation, self.learning_rate)
        fp = replace(default_forest_params(self._task_kind),
                     n_estimators=self.n_estimators)
        self.ensemble_ = train_final(table, self.threshold, hp, self.random_state,
                                     fp, self.n_members, n_jobs=self.n_jobs)
        self.feature_names_in_ = np.asarray(table.feature_names, dtype=object)
        self.n_features_in_ = table.n_features
        return self

    def _raw(self, X):
        check_is_fitted(self, "ensemble_")
        X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan")
        table = DescriptorTable([str(i) for i in range(X.shape[0])],
                                list(self.feature_names_in_), X, None,
                                self._task_kind)
        return predict(self.ensemble_, table)


class HybridClassifier(ClassifierMixin, _HybridBase):
    """Forest-selected features feeding an averaged shallow-network ensemble."""

    _task_kind = CLASSIFICATION

    def fit(self, X, y):
        self.classes_, y_enc = np.unique(np.asarray(y).ravel(), return_inverse=True)
        if len(self.classes_) != 2:
            raise DataError("HybridClassifier needs exactly two classes")
        return self._fit(X, y_enc.astype(np.float64))

    def predict_proba(self, X):
        p = self._raw(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self._raw(X) >= 0.5).astype(int)]


class HybridRegressor(RegressorMixin, _HybridBase):
    _task_kind = REGRESSION

    def fit(self, X, y):
        return self._fit(X, y)

    def predict(self, X):
        return self._raw(X)
