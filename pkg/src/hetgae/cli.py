"""Command-line entry point.

Commands: train | augment-train | eval | synth | inspect-schema | gradcheck.
Machine-readable records go to stdout (or --out); human summaries and
timings go to stderr. Exit codes: 0 ok, 2 config error, 3 data error,
4 numeric failure, 5 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .augment import threshold_grid_search
from .decoder import FocalConfig, dump_predictions
from .errors import ConfigError, DataError, NumericError, VerificationError
from .graph import enumerate_legal_pairs, load_graph, save_graph
from .synth import SyntheticSpec, generate_synthetic, imdb_style_spec, separable_spec
from .trainer import ModelParameters, TrainConfig, evaluate, train
from .verify import gradcheck_all
from .augment import predict_all_legal


def _parse_kv_file(path):
    """Flat key = value config; '#' comments; [section] headers allowed
    (the section name just prefixes nothing, keys stay flat)."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#") or (line.startswith("[") and line.endswith("]")):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _parse_typed_pairs(text, cast=float):
    """'A:1 B:2' or 'A:1,B:2' -> {'A': 1, 'B': 2}."""
    out = {}
    for chunk in text.replace(",", " ").split():
        name, _, val = chunk.partition(":")
        out[name] = cast(val)
    return out


def parse_synth_spec(path):
    """Synthetic graph spec from a flat key = value file."""
    kv = _parse_kv_file(path)
    if "preset" in kv:
        return _preset(kv["preset"])
    try:
        counts = _parse_typed_pairs(kv["nodes"], int)
        triples = []
        for chunk in kv["triples"].replace(",", " ").split():
            pair, _, etype = chunk.partition(":")
            tu, _, tv = pair.partition("-")
            triples.append((tu, tv, etype))
        return SyntheticSpec(
            node_counts=counts,
            triples=triples,
            target_type=kv.get("target", next(iter(counts))),
            num_classes=int(kv.get("classes", 3)),
            homophily=float(kv.get("homophily", 1.0)),
            noise_fraction=float(kv.get("noise", 0.0)),
            density=_parse_typed_pairs(kv["density"]) if "density" in kv else {},
            feature_dim=_parse_typed_pairs(kv["feature_dim"], int) if "feature_dim" in kv else {},
            feature_noise=float(kv.get("feature_noise", 0.4)),
            default_density=float(kv.get("default_density", 0.05)),
        )
    except KeyError as exc:
        raise ConfigError(f"{path}: missing synthetic spec key {exc}") from exc


def _preset(name):
    if name == "separable":
        return separable_spec()
    if name == "noisy":
        return imdb_style_spec(n_target=200, num_classes=5, homophily=0.8,
                               noise_fraction=0.2)
    if name == "imdb-style":
        return imdb_style_spec()
    raise ConfigError(f"unknown synthetic preset {name!r}")


def _load_data(path, seed):
    if os.path.isdir(path):
        return load_graph(path, seed=seed)
    if os.path.isfile(path):
        return generate_synthetic(parse_synth_spec(path), seed)
    raise DataError(f"no such dataset directory or spec file: {path}")


def _train_config(args, file_values):
    def pick(name, default, cast):
        if getattr(args, name, None) is not None:
            return getattr(args, name)
        if name in file_values:
            return cast(file_values[name])
        return default

    focal = FocalConfig(
        gamma=pick("gamma", 2.0, float),
        tau_plus=pick("tau_plus", 0.75, float),
        tau_minus=pick("tau_minus", 0.25, float),
    )
    return TrainConfig(
        dim=pick("dim", 64, int),
        alpha=pick("alpha", 0.3, float),
        beta=pick("beta", 0.1, float),
        focal=focal,
        learning_rate=pick("lr", 5e-4, float),
        weight_decay=pick("weight_decay", 1e-4, float),
        max_epochs=pick("epochs", 300, int),
        patience=pick("patience", 30, int),
        seed=pick("seed", 0, int),
        dropout=pick("dropout", 0.5, float),
        heads=pick("heads", 8, int),
        layers=pick("layers", 3, int),
        negative_ratio=pick("neg_ratio", None, int),
        type_aware_decoder=not bool(pick("uniform_decoder", False, bool)),
    )


def _open_out(args):
    return open(args.out, "w", encoding="utf-8") if args.out else sys.stdout


def _summary(report, out):
    out.write(json.dumps({
        "best_epoch": report.best_epoch,
        "test_macro": report.test_macro,
        "test_micro": report.test_micro,
    }, sort_keys=True) + "\n")


def cmd_train(args, file_values):
    cfg = _train_config(args, file_values)
    graph = _load_data(args.data, cfg.seed)
    out = _open_out(args)
    model, report = train(graph, cfg, stream=out)
    test = evaluate(model, graph, graph.test_idx)
    report.test_macro, report.test_micro = test.macro, test.micro
    _summary(report, out)
    if args.checkpoint:
        model.save(args.checkpoint)
    if args.dump_edges:
        dump_predictions(predict_all_legal(model, graph), args.dump_edges)
    print(f"best epoch {report.best_epoch}: test macro-F1 {test.macro:.4f} "
          f"micro-F1 {test.micro:.4f} ({report.seconds:.1f}s)", file=sys.stderr)
    if out is not sys.stdout:
        out.close()
    return 0


def cmd_augment_train(args, file_values):
    cfg = _train_config(args, file_values)
    graph = _load_data(args.data, cfg.seed)
    out = _open_out(args)
    if args.two_phase:
        phase1, _ = train(graph, cfg)
    elif args.checkpoint:
        phase1 = ModelParameters(graph, cfg)
        phase1.load(args.checkpoint)
    else:
        raise ConfigError("augment-train needs --checkpoint or --two-phase")
    grid_add = [float(x) for x in args.grid_add.split(",")]
    grid_rm = [float(x) for x in args.grid_rm.split(",")]
    result = threshold_grid_search(graph, cfg, grid_add, grid_rm, phase1)
    out.write(result.tsv())
    test = evaluate(result.model, result.augmented.graph, graph.test_idx)
    add_thr, rm_thr = result.policy.for_type(graph.schema.edge_types[0])
    summary = {
        "thr_add": add_thr, "thr_rm": rm_thr,
        "added": len(result.augmented.added), "removed": len(result.augmented.removed),
        "test_macro": test.macro, "test_micro": test.micro,
    }
    if graph.provenance is not None:
        noise = {e for e, tag in graph.provenance.items() if tag == "noise"}
        planted = {e for e, tag in graph.provenance.items() if tag == "planted"}
        removed = result.augmented.removed
        summary["noise_recall"] = len(removed & noise) / len(noise) if noise else 0.0
        summary["planted_removed"] = len(removed & planted) / len(planted) if planted else 0.0
    out.write(json.dumps(summary, sort_keys=True) + "\n")
    if args.save_checkpoint:
        result.model.save(args.save_checkpoint)
    print(f"best policy add>{summary['thr_add']} rm<{summary['thr_rm']}: "
          f"test macro-F1 {test.macro:.4f} micro-F1 {test.micro:.4f}", file=sys.stderr)
    if out is not sys.stdout:
        out.close()
    return 0


def cmd_eval(args, file_values):
    cfg = _train_config(args, file_values)
    graph = _load_data(args.data, cfg.seed)
    model = ModelParameters(graph, cfg)
    model.load(args.checkpoint)
    idx = {"train": graph.train_idx, "valid": graph.valid_idx, "test": graph.test_idx}[args.split]
    metrics = evaluate(model, graph, idx)
    out = _open_out(args)
    out.write(json.dumps({"split": args.split, "macro_f1": metrics.macro,
                          "micro_f1": metrics.micro}, sort_keys=True) + "\n")
    print(f"{args.split}: macro-F1 {metrics.macro:.4f} micro-F1 {metrics.micro:.4f}",
          file=sys.stderr)
    if out is not sys.stdout:
        out.close()
    return 0


def cmd_synth(args, file_values):
    if args.spec:
        spec = parse_synth_spec(args.spec)
    elif args.preset:
        spec = _preset(args.preset)
    else:
        raise ConfigError("synth needs --preset or --spec")
    graph = generate_synthetic(spec, args.seed if args.seed is not None else 0)
    save_graph(graph, args.out_dir)
    print(f"wrote {graph.num_nodes} nodes, {len(graph.edges)} edges to {args.out_dir}",
          file=sys.stderr)
    return 0


def cmd_inspect_schema(args, file_values):
    seed = args.seed if args.seed is not None else 0
    graph = _load_data(args.data, seed)
    pairs = enumerate_legal_pairs(graph)
    out = _open_out(args)
    for entry in pairs.entries:
        out.write(f"{entry.edge_type}\t{entry.type_u}\t{entry.type_v}"
                  f"\t{entry.n_u}\t{entry.n_v}\t{entry.candidates}\n")
    out.write(f"#total\t{pairs.total_candidates}\tfull_square\t{graph.num_nodes ** 2}\n")
    if out is not sys.stdout:
        out.close()
    return 0


def cmd_gradcheck(args, file_values):
    seed = args.seed if args.seed is not None else 0
    errors = gradcheck_all(eps=args.eps, seed=seed, inject_bug=args.inject_bug)
    out = _open_out(args)
    for name in ("l_ae", "l_fb", "l_hgnn", "joint"):
        out.write(f"{name}\t{errors[name]!r}\n")
    if out is not sys.stdout:
        out.close()
    if any(e >= args.tol for e in errors.values()):
        raise VerificationError(
            "gradient check failed: max relative error "
            f"{max(errors.values()):.3e} >= {args.tol:g}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="hetgae")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="write machine-readable output here instead of stdout")

    def add_train_flags(p):
        p.add_argument("--data", required=True, help="dataset directory or synthetic spec file")
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--dim", type=int)
        p.add_argument("--gamma", type=float)
        p.add_argument("--tau-plus", dest="tau_plus", type=float)
        p.add_argument("--tau-minus", dest="tau_minus", type=float)
        p.add_argument("--lr", type=float)
        p.add_argument("--weight-decay", dest="weight_decay", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--dropout", type=float)
        p.add_argument("--heads", type=int)
        p.add_argument("--layers", type=int)
        p.add_argument("--neg-ratio", dest="neg_ratio", type=int)
        p.add_argument("--uniform-decoder", dest="uniform_decoder", action="store_const", const=True)

    p = sub.add_parser("train", help="phase-1 joint training")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--checkpoint", help="write best parameters here")
    p.add_argument("--dump-edges", help="write predicted-edge TSV here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("augment-train", help="threshold grid search + retraining")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--checkpoint", help="phase-1 checkpoint to start from")
    p.add_argument("--two-phase", action="store_true", help="run phase 1 first")
    p.add_argument("--grid-add", default="0.90,0.95,0.99")
    p.add_argument("--grid-rm", default="0.01,0.05,0.10")
    p.add_argument("--save-checkpoint", help="write best phase-2 parameters here")
    p.set_defaults(func=cmd_augment_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="materialize a synthetic dataset directory")
    add_common(p)
    p.add_argument("--preset", choices=("separable", "noisy", "imdb-style"))
    p.add_argument("--spec", help="synthetic spec file")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect-schema", help="list legal triples and candidate counts")
    add_common(p)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_inspect_schema)

    p = sub.add_parser("gradcheck", help="finite-difference check of all loss paths")
    add_common(p)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    file_values = _parse_kv_file(args.config) if getattr(args, "config", None) else {}
    try:
        return args.func(args, file_values)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except VerificationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
