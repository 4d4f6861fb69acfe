"""Command line entry point: ``explink {synth,train,cluster,evaluate,experiment}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..core import Euclidean
from ..errors import ConfigError, DomainError, ExperimentError, LoadError
from ..evaluate import dendrogram_purity_blocks, pairwise_f1_blocks, tune_threshold
from ..hac import build_dendrograms, cut_tree
from ..linkage import EXPLINK, LINKAGE_KINDS, Alpha, Linkage
from ..train import Method, TrainConfig, fit_alpha, train
from . import synth
from .config import read_config, resolve
from .experiment import DEFAULT_SPLIT_RATIOS, run_experiment
from .io import format_float, load_dataset, load_model, read_dendrograms, save_dataset, save_model, write_dendrograms

__all__ = ["main", "build_parser"]


def _list(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _bool(text) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


# name -> (converter, default, help); every option is also a config-file key
OPTIONS = {
    "dataset": (str, None, "dataset path (points file or pairs directory)"),
    "format": (str, "points", "dataset format: points or pairs"),
    "method": (str, "ap", "training method: ap, trp, bst, mst, exp-, exp0, exp+, expa (comma list for experiment)"),
    "linkage": (str, "sl", "linkage: sl, avg, comp, explink (comma list for experiment)"),
    "alpha": (Alpha.parse, None, "ExpLink alpha: a real number, neg-inf or pos-inf"),
    "epochs": (int, 100, "training epochs"),
    "rate_theta": (float, 0.01, "learning rate of the dissimilarity parameters"),
    "rate_alpha": (float, 0.05, "learning rate of alpha"),
    "threshold": (float, None, "hinge threshold for training; cut threshold for evaluate"),
    "margin": (float, None, "hinge margin"),
    "use_margin": (_bool, True, "use the margin hinge (false: raw loss)"),
    "model": (str, None, "model: linear or mahalanobis for train; a saved model file for cluster"),
    "splits": (int, 5, "number of random splits"),
    "split_sizes": (lambda t: [float(v) for v in _list(t)], list(DEFAULT_SPLIT_RATIOS),
                    "train,dev,test counts or ratios"),
    "jobs": (int, 1, "worker processes for experiment"),
    "seed": (int, 0, "random seed (falls back to EXPLINK_SEED)"),
    "out": (str, None, "output path (stdout when omitted, where possible)"),
    "trees": (str, None, "dendrogram file for evaluate"),
    "kind": (str, "two-cluster", "synth generator: two-cluster, path, blobs, pairs"),
    "n_per_cluster": (int, None, "points per cluster for the two-cluster and blobs generators"),
}

COMMANDS = {
    "synth": ("generate a synthetic dataset", ["kind", "seed", "n_per_cluster", "out"]),
    "train": ("learn a dissimilarity model", ["dataset", "format", "method", "epochs", "rate_theta",
                                               "rate_alpha", "threshold", "margin", "use_margin",
                                               "model", "seed", "out"]),
    "cluster": ("build dendrograms", ["dataset", "format", "model", "linkage", "alpha", "out"]),
    "evaluate": ("score dendrograms against the labels", ["dataset", "format", "trees", "threshold", "out"]),
    "experiment": ("train/dev/test protocol over random splits",
                   ["dataset", "format", "method", "linkage", "epochs", "rate_theta", "rate_alpha",
                    "threshold", "margin", "use_margin", "model", "splits", "split_sizes", "jobs",
                    "seed", "out"]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="explink", description="Supervised hierarchical clustering.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value file; flags override it")
        for opt in opts:
            p.add_argument("--" + opt.replace("_", "-"), dest=opt, default=None, help=OPTIONS[opt][2])
    return parser


def _settings(args) -> dict:
    opts = COMMANDS[args.command][1]
    flags = {k: getattr(args, k) for k in opts}
    file_values = read_config(args.config) if args.config else {}
    raw = resolve(flags, file_values, {k: OPTIONS[k][1] for k in opts}, set(opts))
    out = {}
    for key, value in raw.items():
        conv = OPTIONS[key][0]
        if value is None or not isinstance(value, str):
            out[key] = value
            continue
        try:
            out[key] = conv(value)
        except (ValueError, DomainError):
            raise ConfigError(f"invalid value for {key}: {value!r}") from None
    return out


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _need(s: dict, key: str):
    if s.get(key) is None:
        raise ConfigError(f"--{key.replace('_', '-')} is required")
    return s[key]


def _train_config(s: dict, method) -> TrainConfig:
    return TrainConfig(
        method=method, epochs=s["epochs"], rate_theta=s["rate_theta"], rate_alpha=s["rate_alpha"],
        threshold=s["threshold"], margin=s["margin"], use_margin=s["use_margin"], seed=s["seed"],
        model=s["model"] or "linear",
    )


def cmd_synth(s: dict) -> None:
    out = _need(s, "out")
    kind, seed, n = s["kind"], s["seed"], s["n_per_cluster"]
    if kind == "two-cluster":
        data = synth.gen_two_cluster_synth(seed, **({"n_per_cluster": n} if n else {}))
    elif kind == "path":
        data = synth.gen_path_synth(seed)
    elif kind == "blobs":
        data = synth.gen_blobs(seed, **({"n_per_cluster": n} if n else {}))
    elif kind == "pairs":
        data = synth.gen_pair_blocks(seed)
    else:
        raise ConfigError(f"unknown generator {kind!r}")
    save_dataset(data, out)


def cmd_train(s: dict) -> None:
    data = load_dataset(_need(s, "dataset"), s["format"])
    cfg = _train_config(s, Method.parse(s["method"]))
    result = train(data, cfg)
    save_model(_need(s, "out"), result.model, result.alpha,
               method=cfg.method.value, final_loss=float(result.loss_trace[-1]))


def cmd_cluster(s: dict) -> None:
    data = load_dataset(_need(s, "dataset"), s["format"])
    if s["model"]:
        model, saved_alpha = load_model(s["model"])
    elif data.kind == "points":
        model, saved_alpha = Euclidean(data.dim), None
    else:
        raise ConfigError("pair datasets need --model")
    kind = s["linkage"]
    if kind not in LINKAGE_KINDS:
        raise ConfigError(f"unknown linkage {kind!r}")
    if kind == EXPLINK:
        alpha = s["alpha"] if s["alpha"] is not None else saved_alpha
        if alpha is None:
            alpha = fit_alpha(data, model, TrainConfig())
        linkage = Linkage.explink(alpha)
    else:
        linkage = Linkage(kind)
    trees = build_dendrograms(data, model, linkage)
    if s["out"]:
        with open(s["out"], "w") as fh:
            write_dendrograms(trees, fh, data.ids)
    else:
        write_dendrograms(trees, sys.stdout, data.ids)


def cmd_evaluate(s: dict) -> None:
    data = load_dataset(_need(s, "dataset"), s["format"])
    with open(_need(s, "trees")) as fh:
        trees = read_dendrograms(fh, data.ids)
    xi = s["threshold"] if s["threshold"] is not None else tune_threshold(trees, data.labels)
    dp = dendrogram_purity_blocks(trees, data.labels)
    f1 = pairwise_f1_blocks([cut_tree(t, xi) for t in trees], data.labels)
    rows = [("dendrogram_purity", dp), ("pairwise_f1", f1), ("threshold", xi)]
    _write("metric\tvalue\n" + "".join(f"{k}\t{format_float(v)}\n" for k, v in rows), s["out"])


def cmd_experiment(s: dict) -> None:
    data = load_dataset(_need(s, "dataset"), s["format"])
    methods = [Method.parse(m) for m in _list(s["method"])]
    cfg = _train_config(s, methods[0] if methods else Method.AP)
    result = run_experiment(data, methods, _list(s["linkage"]), s["splits"], cfg,
                            split_sizes=s["split_sizes"], n_jobs=s["jobs"])
    _write(result.to_tsv(), s["out"])


HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "cluster": cmd_cluster,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        HANDLERS[args.command](_settings(args))
    except (ConfigError, LoadError, DomainError, ExperimentError) as exc:
        print(f"explink {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
