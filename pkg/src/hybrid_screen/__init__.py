"""Descriptor-based toxicity screening with Extra-Trees feature selection and
small averaged neural-network ensembles."""
from .data import (CLASSIFICATION, REGRESSION, DescriptorTable, Scaler, ZScoreScaler,
                   clean_features, load_table, split_random, stratified_kfold,
                   upsample_minority, zscore_apply, zscore_fit)
from .ensemble import EnsembleModel, HybridClassifier, HybridRegressor, predict, train_final
from .exceptions import (ArtifactError, ConfigError, DataError, EmptySelectionError,
                         HybridScreenError, SearchDegenerateError, TrainingError)
from .forest import (ExtraTreesForest, ForestParams, ImportanceThresholdSelector,
                     fit_forest, select_features)
from .metrics import auc_pr, auc_roc, max_f1, pr_points, r2, roc_points
from .ranking import (CutoffRule, TaskImportance, average_rank, build_cutoff_rule,
                      cumulative_gini, prescreen_classify, prescreen_fractions, top_k)
from .search import (FIXED_SNN_DEFAULTS, SnnSearchSpace, evaluate_config,
                     parallel_optimize, series_optimize)
from .snn import ShallowNetClassifier, ShallowNetRegressor, SnnHyperparams

__version__ = "0.1.0"

__all__ = [
    "CLASSIFICATION", "REGRESSION", "DescriptorTable", "Scaler", "ZScoreScaler",
    "clean_features", "load_table", "split_random", "stratified_kfold",
    "upsample_minority", "zscore_apply", "zscore_fit",
    "EnsembleModel", "HybridClassifier", "HybridRegressor", "predict", "train_final",
    "ArtifactError", "ConfigError", "DataError", "EmptySelectionError",
    "HybridScreenError", "SearchDegenerateError", "TrainingError",
    "ExtraTreesForest", "ForestParams", "ImportanceThresholdSelector", "fit_forest",
    "select_features", "auc_pr", "auc_roc", "max_f1", "pr_points", "r2", "roc_points",
    "CutoffRule", "TaskImportance", "average_rank", "build_cutoff_rule",
    "cumulative_gini", "prescreen_classify", "prescreen_fractions", "top_k",
    "FIXED_SNN_DEFAULTS", "SnnSearchSpace", "evaluate_config", "parallel_optimize",
    "series_optimize", "ShallowNetClassifier", "ShallowNetRegressor", "SnnHyperparams",
]
