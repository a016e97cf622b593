"""Command-line entry point: ``hybrid-screen <command> [options]``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 degenerate search.
Every output is written atomically and, in single-threaded mode, is
byte-identical across reruns with the same config and seed.
"""
import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields

from . import artifact, metrics
from .data import CLASSIFICATION, TASK_KINDS, concat_tables, load_table, split_random
from .ensemble import train_final
from .exceptions import ConfigError, DataError, HybridScreenError, SearchDegenerateError
from .ranking import (SAFE_ZONE, SUSPECT, CutoffRule, TaskImportance, average_rank,
                      build_cutoff_rule, cumulative_gini, prescreen_fractions,
                      safe_zone_mask, top_k)
from .search import (DEFAULT_DROPOUTS, DEFAULT_THRESHOLD_GRID, FIXED_SNN_DEFAULTS,
                     OBJECTIVES, TRIAL_COLUMNS, SnnSearchSpace, default_forest_params,
                     parallel_optimize, prepare_folds, series_optimize,
                     sweep_feature_count, sweep_hidden_layers, sweep_n_estimators,
                     trial_rows)
from .snn import SnnHyperparams

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DEGENERATE = 0, 2, 3, 4
MASK64 = (1 << 64) - 1
CASE_STUDIES = ("series-parallel", "n-estimators", "feature-count", "depth")


@dataclass
class RunConfig:
    """Parsed run configuration; relative paths resolve against ``base_dir``."""

    seed: int
    task_kind: str = CLASSIFICATION
    task_name: str = ""
    train: str = None
    cv: str = None
    test: str = None
    file: str = None
    split: tuple = (0.6, 0.2, 0.2)
    id_column: str = "Name"
    label_column: str = "Label"
    objective: str = None
    mode: str = "series"
    k_folds: int = 5
    threshold_grid: tuple = DEFAULT_THRESHOLD_GRID
    dropouts: tuple = DEFAULT_DROPOUTS
    snn_space: SnnSearchSpace = field(default_factory=SnnSearchSpace)
    base_snn: SnnHyperparams = FIXED_SNN_DEFAULTS
    forest: dict = field(default_factory=dict)
    n_estimators_values: tuple = (10, 20, 50, 100, 200, 500, 1000, 2000)
    depths: tuple = (1, 2, 3, 4, 5)
    sweep_threshold: float = 1.0
    output_dir: str = "."
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d, base_dir=".", seed=None):
        if not isinstance(d, dict):
            raise ConfigError("config root must be a JSON object")
        known = {f.name for f in fields(cls)} - {"base_dir"} | {"data"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        d = dict(d)
        data = d.pop("data", {}) or {}
        if not isinstance(data, dict):
            raise ConfigError("'data' must be an object")
        bad = sorted(set(data) - {"train", "cv", "test", "file", "split"})
        if bad:
            raise ConfigError(f"unknown data keys: {', '.join(bad)}")
        d.update(data)
        if seed is not None:
            d["seed"] = seed
        if d.get("seed") is None:
            raise ConfigError("a seed is required (config 'seed' or --seed)")
        try:
            d["seed"] = _parse_seed(d["seed"])
            for key in ("threshold_grid", "dropouts", "split", "n_estimators_values",
                        "depths"):
                if key in d:
                    d[key] = tuple(d[key])
            if "snn_space" in d:
                d["snn_space"] = SnnSearchSpace.from_dict(d["snn_space"])
            if "base_snn" in d:
                d["base_snn"] = FIXED_SNN_DEFAULTS.with_(**d["base_snn"])
            cfg = cls(base_dir=base_dir, **d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        cfg.validate()
        return cfg

    def validate(self):
        if self.task_kind not in TASK_KINDS:
            raise ConfigError(f"task_kind must be one of {TASK_KINDS}")
        if self.objective is not None and self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}")
        if self.mode not in ("series", "parallel"):
            raise ConfigError("mode must be 'series' or 'parallel'")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be >= 2")
        bad = sorted(set(self.forest) - {"n_estimators", "k_candidates",
                                         "min_samples_split"})
        if bad:
            raise ConfigError(f"unknown forest keys: {', '.join(bad)}")
        try:
            self.forest_params()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid forest params: {exc}") from exc

    def path(self, p):
        return p if p is None or os.path.isabs(p) else os.path.join(self.base_dir, p)

    def forest_params(self):
        return default_forest_params(self.task_kind, **self.forest)

    def _load(self, p):
        return load_table(self.path(p), self.id_column, self.label_column,
                          self.task_kind)

    def training_table(self):
        """Merged train+CV rows used for optimization and final training."""
        if self.file:
            train, cv, _ = split_random(self._load(self.file), self.split, self.seed)
            return concat_tables([train, cv])
        if not self.train:
            raise ConfigError("config needs 'data.train' or 'data.file'")
        tables = [self._load(self.train)]
        if self.cv:
            tables.append(self._load(self.cv))
        return concat_tables(tables) if len(tables) > 1 else tables[0]

    def test_table(self):
        if self.file:
            return split_random(self._load(self.file), self.split, self.seed)[2]
        if not self.test:
            raise ConfigError("config has no test table ('data.test' or 'data.file')")
        return self._load(self.test)


def _parse_seed(value):
    seed = int(value)
    if seed < 0 or seed > MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {value}")
    return seed


def load_config(path, seed=None):
    if path is None:
        if seed is None:
            raise ConfigError("no --config given and no --seed to run with")
        return RunConfig.from_dict({}, seed=seed)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(doc, os.path.dirname(os.path.abspath(path)), seed)


# output helpers

def _out(args, cfg, name):
    directory = args.out or cfg.path(cfg.output_dir)
    return os.path.join(directory, name)


def _write_json(path, doc):
    artifact.atomic_write(path, artifact.dumps(doc))


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write_csv(path, header, rows):
    artifact.atomic_write(path, _csv_text(header, rows))


def _write_trials(path, trials):
    _write_csv(path, TRIAL_COLUMNS, trial_rows(trials))


def _fmt(x):
    return repr(float(x))


def _table_arg(cfg, path, fallback):
    if path:
        return load_table(path, cfg.id_column, None, cfg.task_kind)
    return fallback()


def _labelled_table_arg(cfg, path, fallback):
    if path:
        return load_table(path, cfg.id_column, cfg.label_column, cfg.task_kind)
    return fallback()


# commands

def cmd_optimize(args, cfg):
    table = cfg.training_table()
    mode = args.mode or cfg.mode
    common = dict(seed=cfg.seed, k=cfg.k_folds, objective=cfg.objective,
                  forest_params=cfg.forest_params(), base_hp=cfg.base_snn,
                  n_jobs=args.jobs)
    if mode == "series":
        outcome = series_optimize(table, cfg.threshold_grid, cfg.snn_space, **common)
    else:
        outcome = parallel_optimize(table, cfg.threshold_grid, cfg.dropouts, **common)
    _write_trials(_out(args, cfg, "trials.csv"), outcome.trials)
    best = outcome.best_config()
    best["seed"] = cfg.seed
    best["task_kind"] = cfg.task_kind
    _write_json(_out(args, cfg, "best_config.json"), best)
    print(f"best threshold {outcome.best_threshold} cv score {outcome.best_score:.4f}")
    return EXIT_OK


def _read_best(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return float(doc["threshold"]), SnnHyperparams.from_dict(doc["snn"])
    except OSError as exc:
        raise ConfigError(f"cannot read best config {path}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed best config {path}: {exc}") from exc


def cmd_train(args, cfg):
    if args.best:
        threshold, hp = _read_best(args.best)
    else:
        threshold, hp = cfg.sweep_threshold, cfg.base_snn
    table = cfg.training_table()
    ens = train_final(table, threshold, hp, cfg.seed, cfg.forest_params(),
                      n_jobs=args.jobs)
    rule = None
    if args.rule_features:
        names = args.rule_features.split(",")
        rule = build_cutoff_rule([_cutoff_map(ens)], names)
    path = _out(args, cfg, "model.json")
    artifact.save(path, ens, table.feature_names, cfg.task_name, rule)
    print(f"{len(ens.selected)} features selected; model written to {path}")
    return EXIT_OK


def _cutoff_map(ens):
    if ens.root_cutoffs is None:
        raise DataError("artifact stores no split cutoffs")
    return dict(zip(ens.kept_names, ens.root_cutoffs))


def cmd_evaluate(args, cfg):
    ens, _ = artifact.load(args.model)
    table = _labelled_table_arg(cfg, args.table, cfg.test_table)
    if table.labels is None:
        raise DataError(f"evaluation table lacks label column {cfg.label_column!r}")
    scores = ens.predict(table)
    y = table.labels
    if ens.task_kind == CLASSIFICATION:
        best_f1, tau = metrics.max_f1(scores, y)
        doc = {"n": table.n_rows, "auc_roc": metrics.auc_roc(scores, y),
               "auc_pr": metrics.auc_pr(scores, y), "max_f1": best_f1,
               "max_f1_threshold": tau, "accuracy": metrics.accuracy(scores, y)}
        _write_csv(_out(args, cfg, "roc.csv"), ("fpr", "tpr"),
                   [(_fmt(a), _fmt(b)) for a, b in metrics.roc_points(scores, y)])
        _write_csv(_out(args, cfg, "pr.csv"), ("recall", "precision"),
                   [(_fmt(a), _fmt(b)) for a, b in metrics.pr_points(scores, y)])
    else:
        doc = {"n": table.n_rows, "r2": metrics.r2(scores, y)}
    _write_json(_out(args, cfg, "metrics.json"), doc)
    print(" ".join(f"{k}={v:.4f}" for k, v in doc.items() if isinstance(v, float)))
    return EXIT_OK


def cmd_predict(args, cfg):
    ens, _ = artifact.load(args.model)
    table = _table_arg(cfg, args.table, cfg.test_table)
    scores = ens.predict(table)
    _write_csv(_out(args, cfg, "predictions.csv"), ("id", "score"),
               [(cid, _fmt(s)) for cid, s in zip(table.compound_ids, scores)])
    return EXIT_OK


def cmd_rank(args, cfg):
    tasks, cutoffs = [], []
    for i, path in enumerate(args.models):
        ens, doc = artifact.load(path)
        if ens.importances is None:
            raise DataError(f"{path}: artifact stores no importances")
        name = doc.get("task_name") or f"task{i}"
        tasks.append(TaskImportance(name, ens.kept_names, ens.importances))
        cutoffs.append(_cutoff_map(ens))
    cum, ranks = cumulative_gini(tasks), average_rank(tasks)
    k = args.top or len(cum.values)
    try:
        rows = top_k(cum, k, ranks)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_csv(_out(args, cfg, "ranking.csv"),
               ("feature", "cumulative_gini", "average_rank"),
               [(f, _fmt(s), _fmt(r)) for f, s, r in rows])
    if args.rule_features:
        rule = build_cutoff_rule(cutoffs, args.rule_features.split(","))
        artifact.atomic_write(_out(args, cfg, "rule.json"), rule.to_json())
    return EXIT_OK


def _read_rule(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read rule {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except ValueError as exc:
            raise DataError(f"{path} is not valid JSON: {exc}") from exc
        rule = artifact.rule_from_doc(doc)
        if rule is None:
            raise DataError(f"{path}: artifact carries no cutoff rule")
        return rule
    return CutoffRule.from_json(text)


def cmd_prescreen(args, cfg):
    rule = _read_rule(args.rule)
    with_labels = bool(args.labelled)
    if with_labels:
        table = _labelled_table_arg(cfg, args.table, cfg.test_table)
    else:
        table = _table_arg(cfg, args.table, cfg.test_table)
    inside = safe_zone_mask(table, rule)
    _write_csv(_out(args, cfg, "prescreen.csv"), ("id", "zone"),
               [(cid, SAFE_ZONE if s else SUSPECT)
                for cid, s in zip(table.compound_ids, inside)])
    summary = {"n": table.n_rows, "n_safe_zone": int(inside.sum()),
               "rule": [{"feature": f, "cutoff": c}
                        for f, c in zip(rule.features, rule.cutoffs)]}
    if with_labels and table.labels is not None and table.task_kind == CLASSIFICATION:
        toxic, nontoxic = prescreen_fractions(table, rule)
        summary["toxic_fraction"] = toxic
        summary["nontoxic_fraction"] = nontoxic
    _write_json(_out(args, cfg, "prescreen_summary.json"), summary)
    return EXIT_OK


def cmd_casestudy(args, cfg):
    table = cfg.training_table()
    fp = cfg.forest_params()
    common = dict(seed=cfg.seed, k=cfg.k_folds, objective=cfg.objective,
                  forest_params=fp, n_jobs=args.jobs)
    which = args.which
    if which == "series-parallel":
        folds = prepare_folds(table, cfg.k_folds, cfg.seed, fp, n_jobs=args.jobs)
        s = series_optimize(table, cfg.threshold_grid, cfg.snn_space,
                            base_hp=cfg.base_snn, folds=folds, **common)
        p = parallel_optimize(table, cfg.threshold_grid, cfg.dropouts,
                              base_hp=cfg.base_snn, folds=folds, **common)
        header = ("mode", "auc")
        curve = [("series", s.best_score), ("parallel", p.best_score)]
        trials = s.trials + p.trials
    elif which == "n-estimators":
        header = ("n_estimators", "auc")
        curve, trials = sweep_n_estimators(table, cfg.n_estimators_values,
                                           cfg.sweep_threshold, cfg.base_snn, **common)
    elif which == "feature-count":
        header = ("n_features", "auc")
        curve, trials = sweep_feature_count(table, cfg.threshold_grid, cfg.base_snn,
                                            **common)
    else:
        header = ("hidden_layers", "auc")
        curve, trials = sweep_hidden_layers(table, cfg.depths, cfg.sweep_threshold,
                                            cfg.base_snn, **common)
    stem = "casestudy_" + which.replace("-", "_")
    _write_csv(_out(args, cfg, stem + ".csv"), header,
               [(x, _fmt(y)) for x, y in curve])
    _write_trials(_out(args, cfg, stem + "_trials.csv"), trials)
    return EXIT_OK


COMMANDS = {"optimize": cmd_optimize, "train": cmd_train, "evaluate": cmd_evaluate,
            "predict": cmd_predict, "rank": cmd_rank, "prescreen": cmd_prescreen,
            "casestudy": cmd_casestudy}


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="run configuration JSON")
    parser.add_argument("--seed", default=default, help="master seed (unsigned 64-bit)")
    parser.add_argument("--jobs", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="worker threads for trials and trees")
    parser.add_argument("--out", default=default, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hybrid-screen",
        description="Extra-Trees feature selection with shallow-network ensembles.")
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = add("optimize", "search the threshold and network settings")
    p.add_argument("--mode", choices=("series", "parallel"))
    p = add("train", "fit the final ensemble and write an artifact")
    p.add_argument("--best", help="best-config JSON from optimize")
    p.add_argument("--rule-features", help="comma-separated features for a cutoff rule")
    p = add("evaluate", "score a labelled table with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--table")
    p = add("predict", "score an unlabelled table with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--table")
    p = add("rank", "cross-task feature ranking from saved models")
    p.add_argument("models", nargs="+")
    p.add_argument("--top", type=int)
    p.add_argument("--rule-features", help="comma-separated features for rule.json")
    p = add("prescreen", "apply a cutoff rule to a table")
    p.add_argument("--rule", required=True, help="rule JSON or model artifact")
    p.add_argument("--table")
    p.add_argument("--labelled", action="store_true",
                   help="table has labels; report toxic/nontoxic fractions")
    p = add("casestudy", "run one of the sensitivity sweeps")
    p.add_argument("which", choices=CASE_STUDIES)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        seed = None
        if args.seed is not None:
            try:
                seed = _parse_seed(args.seed)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = load_config(args.config, seed)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SearchDegenerateError as exc:
        print(f"search degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except HybridScreenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
