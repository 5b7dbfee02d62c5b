"""Command-line entry point: train, evaluate, predict, gradcheck, gen-synth.

Runs are driven by a YAML config file; unknown keys are rejected so that
typos in hyperparameter sweeps fail loudly. The resolved config (defaults
filled in) is written next to the outputs. Exit codes: 0 success,
2 config error, 3 I/O error, 4 numeric failure, 5 check failure.
"""

import argparse
import copy
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from rlbl import baselines, evaluation, ingestion, model, scoring, snapshot, time_aware, training
from rlbl.data import EmptyCorpus, build_corpus

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_CHECK = 5


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "dataset": {
        "format": "synthetic",
        "path": None,
        "delimiter": "\t",
        "columns": {"user": 0, "item": 1, "behavior": 2, "timestamp": 3},
        "has_header": False,
        "timestamp_unit": 1,
        "behavior_map": None,
        "target_behaviors": None,
        "synth": {},
    },
    "split": [0.7, 0.1],
    "model": {"kind": "rlbl", "d": 8, "n": 2, "bin_width": 3600.0, "n_bins": 24},
    "train": {
        "lam": 0.01,
        "learning_rate": 0.05,
        "lr_policy": "fixed",
        "lr_decay": 0.0,
        "negatives_per_positive": 1,
        "epochs": 10,
        "patience": 5,
        "regularize_u0": True,
        "train_behavior_mats": True,
        "bptt_truncation": None,
        "shared_reg": "per-epoch",
        "clip_norm": 5.0,
    },
    "eval": {"cutoffs": [1, 2, 5, 10], "buckets": [50, 200], "exclude_seen": False},
    "out": None,
    "seed": 0,
}

MODEL_KINDS = ("rlbl", "ta-rlbl", "pop", "markov", "linear-rnn")


def _merge(defaults, override, path=""):
    if override is None:
        return copy.deepcopy(defaults)
    if not isinstance(override, dict):
        raise ConfigError(f"expected a mapping at {path or 'top level'}")
    merged = copy.deepcopy(defaults)
    for key, value in override.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(defaults[key], dict) and key not in ("columns", "behavior_map", "synth"):
            merged[key] = _merge(defaults[key], value, path + key + ".")
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path, seed_override=None, out_override=None):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ingestion.IoError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    cfg = _merge(DEFAULT_CONFIG, raw)
    if seed_override is not None:
        cfg["seed"] = seed_override
    if out_override is not None:
        cfg["out"] = out_override
    if cfg["out"] is None:
        root = os.environ.get("RLBL_OUT", "runs")
        cfg["out"] = str(Path(root) / Path(path).stem)
    if cfg["model"]["kind"] not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {cfg['model']['kind']!r}")
    ds = cfg["dataset"]
    if ds["format"] not in ("movielens", "generic", "synthetic"):
        raise ConfigError(f"unknown dataset format {ds['format']!r}")
    if ds["format"] != "synthetic" and not ds["path"]:
        raise ConfigError("dataset.path is required for non-synthetic datasets")
    if ds["format"] != "synthetic" and not Path(ds["path"]).exists():
        raise ConfigError(f"dataset.path does not exist: {ds['path']}")
    return cfg


def load_events(cfg):
    ds = cfg["dataset"]
    if ds["format"] == "movielens":
        return ingestion.parse_movielens(ds["path"])
    if ds["format"] == "generic":
        cols = ds["columns"]
        spec = ingestion.ColumnSpec(
            delimiter=ds["delimiter"],
            user=cols["user"], item=cols["item"],
            behavior=cols["behavior"], timestamp=cols["timestamp"],
            has_header=ds["has_header"], timestamp_unit=ds["timestamp_unit"],
        )
        return ingestion.parse_generic(ds["path"], spec, ds["behavior_map"])
    synth = dict(ds["synth"])
    synth.setdefault("rng_seed", cfg["seed"])
    return ingestion.generate_synthetic(ingestion.synth_spec_from_dict(synth))


def load_corpus(cfg):
    return build_corpus(load_events(cfg), tuple(cfg["split"]))


def init_model(cfg, corpus):
    kind = cfg["model"]["kind"]
    d, n = cfg["model"]["d"], cfg["model"]["n"]
    seed = cfg["seed"]
    if kind == "rlbl":
        return model.init_rlbl_params(corpus.n_users, corpus.n_items,
                                      corpus.n_behaviors, d=d, n=n, seed=seed)
    if kind == "ta-rlbl":
        return time_aware.init_ta_rlbl_params(
            corpus.n_users, corpus.n_items, corpus.n_behaviors, d=d, n=n,
            bin_width=cfg["model"]["bin_width"], n_bins=cfg["model"]["n_bins"], seed=seed)
    if kind == "linear-rnn":
        return baselines.linear_rnn_as_rlbl(corpus, d=d, seed=seed)
    if kind == "pop":
        return baselines.PopModel(corpus)
    if kind == "markov":
        return baselines.MarkovModel(corpus)
    raise ConfigError(f"unknown model kind {kind!r}")


def train_config(cfg):
    t = cfg["train"]
    kind = cfg["model"]["kind"]
    return training.TrainConfig(
        lam=t["lam"],
        learning_rate=t["learning_rate"],
        lr_policy=t["lr_policy"],
        lr_decay=t["lr_decay"],
        negatives_per_positive=t["negatives_per_positive"],
        epochs=t["epochs"],
        rng_seed=cfg["seed"],
        bptt_truncation=t["bptt_truncation"],
        regularize_u0=t["regularize_u0"],
        train_behavior_mats=t["train_behavior_mats"] and kind != "linear-rnn",
        shared_reg=t["shared_reg"],
        clip_norm=t["clip_norm"],
    )


def eval_config(cfg, segment="test"):
    e = cfg["eval"]
    targets = cfg["dataset"]["target_behaviors"]
    return evaluation.EvalConfig(
        cutoffs=tuple(e["cutoffs"]),
        target_behaviors=None if targets is None else frozenset(targets),
        exclude_seen=e["exclude_seen"],
        bucket_thresholds=tuple(e["buckets"]),
        segment=segment,
    )


def _scorer(params):
    if isinstance(params, (baselines.PopModel, baselines.MarkovModel)):
        return params
    return scoring.scorer_for(params)


def _write_resolved(cfg, out_dir):
    with open(out_dir / "resolved_config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


def cmd_train(cfg, threads=1):
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(cfg)
    params = init_model(cfg, corpus)
    _write_resolved(cfg, out_dir)

    if isinstance(params, (baselines.PopModel, baselines.MarkovModel)):
        snapshot.save_snapshot(out_dir / "model.snap", params, corpus)
        print(f"fitted {cfg['model']['kind']} baseline -> {out_dir / 'model.snap'}")
        return EXIT_OK

    tcfg = train_config(cfg)
    vcfg = eval_config(cfg, segment="valid")
    rng = np.random.default_rng(tcfg.rng_seed)
    patience = cfg["train"]["patience"]
    best_map, best_params, since_best = -1.0, copy.deepcopy(params), 0
    log_lines = ["epoch\tmean_loss\twall_time\tmean_step\tvalid_map"]

    for epoch in range(tcfg.epochs):
        rep = training.sgd_epoch(params, corpus, tcfg, rng, threads=threads, epoch=epoch)
        try:
            valid_map = evaluation.evaluate(_scorer(params), corpus, vcfg, threads=threads).map
        except evaluation.EmptyEval:
            valid_map = float("nan")
        log_lines.append(f"{epoch}\t{rep.mean_loss:.6f}\t{rep.wall_time:.3f}\t"
                         f"{rep.mean_step_size:.6g}\t{valid_map:.6f}")
        print(log_lines[-1])
        if np.isnan(valid_map) or valid_map > best_map:
            best_map = -1.0 if np.isnan(valid_map) else valid_map
            best_params = copy.deepcopy(params)
            since_best = 0
        else:
            since_best += 1
            if patience is not None and since_best >= patience:
                print(f"early stop after epoch {epoch} (patience {patience})")
                break

    snapshot.save_snapshot(out_dir / "model.snap", best_params, corpus)
    with open(out_dir / "train_log.tsv", "w", encoding="utf-8") as fh:
        fh.write("\n".join(log_lines) + "\n")
    print(f"snapshot -> {out_dir / 'model.snap'}")
    return EXIT_OK


def cmd_evaluate(cfg, snapshot_path, threads=1):
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    kind, params, bound_corpus = snapshot.load_snapshot(snapshot_path)
    corpus = bound_corpus if bound_corpus is not None else load_corpus(cfg)
    _check_dims(params, corpus)
    report = evaluation.evaluate(_scorer(params), corpus, eval_config(cfg), threads=threads)
    (out_dir / "report.tsv").write_text(evaluation.report_table(report), encoding="utf-8")
    (out_dir / "report.txt").write_text(evaluation.report_summary(report), encoding="utf-8")
    print(evaluation.report_summary(report), end="")
    print(f"report -> {out_dir / 'report.tsv'}")
    return EXIT_OK


def _check_dims(params, corpus):
    n_items = getattr(params, "n_items", None)
    if n_items is None and getattr(params, "item_counts", None) is not None:
        n_items = len(params.item_counts)
    if n_items is None and getattr(params, "transitions", None) is not None:
        n_items = params.transitions.shape[0]
    if n_items is not None and n_items != corpus.n_items:
        raise snapshot.SnapshotError(
            f"snapshot has {n_items} items but corpus has {corpus.n_items}")


class UserError(KeyError):
    pass


def cmd_predict(snapshot_path, user, behavior, top_k, query_time=None):
    kind, params, corpus = snapshot.load_snapshot(snapshot_path)
    if corpus is None:
        raise snapshot.SnapshotError("snapshot carries no corpus binding; retrain with it")
    try:
        uid = corpus.user_ids.index(str(user))
    except ValueError:
        raise UserError(f"unknown user {user!r}") from None
    del query_time  # scoring conditions on the newest observed timestamp
    seq = corpus.sequences[uid]
    scorer = _scorer(params)
    ranked = scoring.top_k_items(scorer, seq, len(seq), int(behavior), top_k)
    for item, value in ranked:
        print(f"{corpus.item_ids[item]}\t{value:.6f}")
    return EXIT_OK


def run_gradcheck(seed=0, tolerance=1e-4, corrupt=False):
    """Build tiny random instances and check both model kinds.

    Returns (passed, lines). ``corrupt`` injects a sign error as a
    negative control.
    """
    spec = ingestion.SynthSpec(n_users=3, n_items=10, n_behaviors=3,
                               seq_len_range=(12, 12), rng_seed=seed)
    corpus = ingestion.synth_corpus(spec)
    rng = np.random.default_rng(seed)
    tcfg = training.TrainConfig(lam=0.01)
    lines, ok = [], True
    for kind in ("rlbl", "ta-rlbl"):
        if kind == "rlbl":
            params = model.init_rlbl_params(3, corpus.n_items, 3, d=4, n=2, seed=seed + 1)
        else:
            params = time_aware.init_ta_rlbl_params(
                3, corpus.n_items, 3, d=4, n=2, bin_width=3600.0, n_bins=8, seed=seed + 1)
        seq = corpus.sequences[0]
        k = 5
        inst = training.TrainingInstance(
            user_id=0, position=k, behavior=int(seq.behaviors[k]),
            pos_item=int(seq.items[k]),
            neg_item=training.sample_negative(corpus, 0, k, int(seq.behaviors[k]), rng),
        )
        injected = None
        if corrupt:
            injected = training.instance_gradients(params, seq, inst, tcfg).scale(-1.0)
        report = training.gradient_check(params, seq, k, inst, tolerance=tolerance,
                                         cfg=tcfg, rng=rng, analytic_bundle=injected)
        for name, err in report.max_rel_error.items():
            lines.append(f"{kind}\t{name}\t{err:.3e}\t{'ok' if err <= tolerance else 'FAIL'}")
        ok = ok and report.passed
    return ok, lines


def cmd_gradcheck(seed=0):
    ok, lines = run_gradcheck(seed=seed)
    print("\n".join(lines))
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_gen_synth(cfg, out_path):
    synth = dict(cfg["dataset"]["synth"])
    synth.setdefault("rng_seed", cfg["seed"])
    spec = ingestion.synth_spec_from_dict(synth)
    events = ingestion.generate_synthetic(spec)
    ingestion.write_generic(events, out_path)
    users = len({e.user for e in events})
    items = len({e.item for e in events})
    print(f"{len(events)} events, {users} users, {items} items, "
          f"{spec.n_behaviors} behaviors -> {out_path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="rlbl", description=__doc__)
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", default=None, help="override the output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a snapshot")
    p.add_argument("--config", required=True)

    p = sub.add_parser("evaluate", help="evaluate a snapshot on the test segment")
    p.add_argument("--config", required=True)
    p.add_argument("--snapshot", required=True)

    p = sub.add_parser("predict", help="rank items for one user")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--behavior", type=int, required=True)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--query-time", type=int, default=None)

    p = sub.add_parser("gradcheck", help="finite-difference check of both model kinds")

    p = sub.add_parser("gen-synth", help="write a synthetic event log")
    p.add_argument("--config", required=True)
    p.add_argument("--out-file", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cfg = load_config(args.config, args.seed, args.out)
            return cmd_train(cfg, threads=args.threads)
        if args.command == "evaluate":
            cfg = load_config(args.config, args.seed, args.out)
            return cmd_evaluate(cfg, args.snapshot, threads=args.threads)
        if args.command == "predict":
            return cmd_predict(args.snapshot, args.user, args.behavior,
                               args.top_k, args.query_time)
        if args.command == "gradcheck":
            return cmd_gradcheck(seed=args.seed or 0)
        if args.command == "gen-synth":
            cfg = load_config(args.config, args.seed, args.out)
            return cmd_gen_synth(cfg, args.out_file)
        raise ConfigError(f"unknown command {args.command!r}")
    except training.NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ingestion.IoError, snapshot.SnapshotError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, EmptyCorpus, UserError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
