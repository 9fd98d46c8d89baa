"""Command-line surface: gen-data, train-embed, train, evaluate, experiment.

Every command is deterministic given config + seed, writes its artifacts
under the output directory, and finishes by writing MANIFEST.txt with the
sha256 of each file. Exit codes: 0 success, 2 usage/config error, 3 data
error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .data import (build_catalog, build_vocabulary, chronological_split,
                   load_catalog_file, load_events_file, save_catalog_file,
                   save_events_file, sessionize)
from .errors import ConfigError, DataError, MetricError, NumericError
from .experiments import (ExperimentConfig, ExperimentData,
                          delong_csv_rows, render_report_text,
                          report_csv_rows, run_experiment)
from .metrics import auc, average_precision, delong_test, roc_curve
from .models import (build_embedding_table, load_model, save_model,
                     score_sessions, train_embedding_component,
                     train_predictor)
from .serialize import write_csv, write_document, write_manifest
from .synth import generate_dataset


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _refuse_overwrite(paths: list[str], force: bool) -> None:
    existing = [p for p in paths if os.path.exists(p)]
    if existing and not force:
        raise ConfigError(f"refusing to overwrite {existing[0]} (use --force)")


def _load_sessions(cfg: RunConfig):
    if not cfg.paths.catalog or not cfg.paths.events:
        raise ConfigError("config must set paths.catalog and paths.events")
    if not os.path.exists(cfg.paths.catalog):
        raise ConfigError(f"catalog file not found: {cfg.paths.catalog}")
    if not os.path.exists(cfg.paths.events):
        raise ConfigError(f"events file not found: {cfg.paths.events}")
    rows = load_catalog_file(cfg.paths.catalog)
    events = load_events_file(cfg.paths.events)
    sessions = sessionize(events)
    days = sorted({s.day for s in sessions})
    if len(days) < 3:
        raise DataError("need at least 3 distinct days for a train/val/test split")
    val_day = cfg.split.val_day if cfg.split.val_day is not None else days[-2]
    test_day = cfg.split.test_day if cfg.split.test_day is not None else days[-1]
    split = chronological_split(sessions, val_day, test_day)
    return rows, split


def _train_items_catalogs(rows, split, cfg: RunConfig):
    """Vocabulary and catalogs from the items seen in training sessions."""
    universe = {i for s in split.train for i in s.item_ids}
    rows_by_id = {r[0]: r for r in rows}
    train_rows = [rows_by_id[i] for i in sorted(universe) if i in rows_by_id]
    if not train_rows:
        raise DataError("no catalog items occur in the training sessions")
    n_categories = cfg.generator.n_categories
    max_cat = max(r[1] for r in rows)
    n_categories = max(n_categories, max_cat)
    vocab = build_vocabulary((f"{r[2]} {r[3]}" for r in train_rows),
                             cfg.train.min_word_freq)
    catalog_train = build_catalog(train_rows, vocab, n_categories)
    catalog_full = build_catalog(rows, vocab, n_categories)
    return catalog_train, catalog_full


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg: RunConfig, args) -> int:
    out = _ensure_out(args.out or cfg.run.out_dir)
    catalog_path = os.path.join(out, "catalog.tsv")
    events_path = os.path.join(out, "events.tsv")
    truth_path = os.path.join(out, "truth.csv")
    _refuse_overwrite([catalog_path, events_path, truth_path], args.force)
    gen_cfg = cfg.generator
    if args.seed is not None:
        import dataclasses
        gen_cfg = dataclasses.replace(gen_cfg, seed=args.seed)
    catalog, sessions = generate_dataset(gen_cfg)
    save_catalog_file(catalog_path, catalog.rows)
    save_events_file(events_path, sessions.events)
    write_csv(truth_path, ["session_id", "label", "true_probability"],
              [[s.session_id, s.label, float(p)]
               for s, p in zip(sessions.sessions, sessions.true_probabilities)])
    write_manifest(out)
    print(f"wrote {len(catalog.rows)} items, {len(sessions.events)} events, "
          f"{len(sessions.sessions)} sessions to {out}")
    return 0


def cmd_train_embed(cfg: RunConfig, args) -> int:
    out = _ensure_out(args.out or cfg.run.out_dir)
    rows, split = _load_sessions(cfg)
    catalog_train, _ = _train_items_catalogs(rows, split, cfg)
    seed = args.seed if args.seed is not None else cfg.run.seed
    comp, trace = train_embedding_component(
        catalog_train, cfg.dims, cfg.train.to_train_config(seed))
    save_model(os.path.join(out, "embedding_component.model"), comp)
    write_csv(os.path.join(out, "embed_trace.csv"),
              ["epoch", "train_loss", "val_accuracy"],
              [[r["epoch"], r["train_loss"],
                "" if r["val_accuracy"] is None else r["val_accuracy"]]
               for r in trace])
    write_manifest(out)
    best = max((r["val_accuracy"] for r in trace
                if r["val_accuracy"] is not None), default=float("nan"))
    print(f"embedding component trained; best held-out category accuracy "
          f"{best:.4f}" if best == best else "embedding component trained")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    out = _ensure_out(args.out or cfg.run.out_dir)
    rows, split = _load_sessions(cfg)
    seed = args.seed if args.seed is not None else cfg.run.seed
    table = None
    if args.model_kind in ("content", "integrated"):
        embed_path = (cfg.paths.embedding_model
                      or os.path.join(out, "embedding_component.model"))
        if not os.path.exists(embed_path):
            raise ConfigError(f"embedding model not found: {embed_path} "
                              f"(run train-embed first or set paths.embedding_model)")
        comp = load_model(embed_path, expected_kind="embedding_component")
        _, catalog_full = _train_items_catalogs(rows, split, cfg)
        if catalog_full.vocabulary.size != comp.vocab_size:
            raise DataError("embedding model vocabulary does not match the "
                            "training data (was it trained on this split?)")
        table = build_embedding_table(comp, catalog_full)
    model, trace = train_predictor(args.model_kind, list(split.train),
                                   list(split.validation), table,
                                   cfg.train.to_train_config(seed), cfg.dims)
    save_model(os.path.join(out, f"{args.model_kind}.model"), model)
    write_csv(os.path.join(out, f"{args.model_kind}_trace.csv"),
              ["epoch", "train_loss", "val_auc"],
              [[r["epoch"], r["train_loss"], r["val_auc"]] for r in trace])
    write_manifest(out)
    best = max(r["val_auc"] for r in trace)
    best_epoch = next(r["epoch"] for r in trace if r["val_auc"] == best)
    print(f"{args.model_kind} trained; best epoch {best_epoch} "
          f"(validation AUC {best:.4f})")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    out = _ensure_out(args.out or cfg.run.out_dir)
    rows, split = _load_sessions(cfg)
    if not split.test:
        raise DataError("test partition is empty")
    labels = np.array([s.label for s in split.test], dtype=np.int64)
    table = None
    models = []
    for path in args.models:
        if not os.path.exists(path):
            raise ConfigError(f"model file not found: {path}")
        model = load_model(path)
        if model.kind == "embedding_component":
            raise ConfigError(f"{path}: evaluate expects predictor models")
        models.append(model)
    if any(m.kind in ("content", "integrated") for m in models):
        embed_path = (cfg.paths.embedding_model
                      or os.path.join(out, "embedding_component.model"))
        if not os.path.exists(embed_path):
            raise ConfigError(f"embedding model not found: {embed_path}")
        comp = load_model(embed_path, expected_kind="embedding_component")
        _, catalog_full = _train_items_catalogs(rows, split, cfg)
        table = build_embedding_table(comp, catalog_full)
    doc: dict = {"test_sessions": len(split.test),
                 "buy_rate_pct": 100.0 * float(labels.mean()), "metrics": {}}
    scores = {}
    for model in models:
        s = score_sessions(model, list(split.test), table)
        scores[model.kind] = s
        doc["metrics"][model.kind] = {"auc": auc(s, labels),
                                      "average_precision": average_precision(s, labels)}
        fpr, tpr, thr = roc_curve(s, labels)
        write_csv(os.path.join(out, f"roc_{model.kind}.csv"),
                  ["fpr", "tpr", "threshold"],
                  [[float(a), float(b), float(t)] for a, b, t in zip(fpr, tpr, thr)])
    if len(models) >= 2:
        kinds = [m.kind for m in models]
        rows_out = []
        for i in range(len(kinds)):
            for j in range(i + 1, len(kinds)):
                r = delong_test(scores[kinds[i]], scores[kinds[j]], labels)
                rows_out.append([kinds[i], kinds[j], r.z, r.p_value])
        write_csv(os.path.join(out, "delong.csv"),
                  ["model_a", "model_b", "z", "p_value"], rows_out)
    write_document(os.path.join(out, "metrics.txt"), doc)
    write_manifest(out)
    for kind, m in doc["metrics"].items():
        print(f"{kind}: auc={m['auc']:.4f} ap={m['average_precision']:.4f}")
    return 0


def cmd_experiment(cfg: RunConfig, args) -> int:
    out = _ensure_out(args.out or cfg.run.out_dir)
    rows, split = _load_sessions(cfg)
    seed = args.seed if args.seed is not None else cfg.run.seed
    protocol = (args.protocol or cfg.experiment.protocol).replace("-", "_")
    x_list = cfg.experiment.x_list
    if args.x_list:
        try:
            x_list = tuple(float(v) for v in args.x_list.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --x-list value: {args.x_list!r}") from exc
    workers = args.workers if args.workers is not None else cfg.experiment.workers
    n_categories = max(cfg.generator.n_categories, max(r[1] for r in rows))
    data = ExperimentData(catalog_rows=rows, n_categories=n_categories,
                          train=split.train, validation=split.validation,
                          test=split.test)
    exp_cfg = ExperimentConfig(
        protocol=protocol, x_list=x_list, models=tuple(cfg.experiment.models),
        seed=seed, dims=cfg.dims,
        train=cfg.train.to_train_config(seed), workers=workers,
        min_word_freq=cfg.train.min_word_freq)
    result = run_experiment(data, exp_cfg)
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(render_report_text(result.report))
    header, csv_rows = report_csv_rows(result.report)
    write_csv(os.path.join(out, "report.csv"), header, csv_rows)
    dheader, drows = delong_csv_rows(result.report)
    if drows:
        write_csv(os.path.join(out, "delong.csv"), dheader, drows)
    for (label, kind), s in sorted(result.scores.items()):
        fpr, tpr, thr = roc_curve(s, result.test_labels)
        write_csv(os.path.join(out, f"roc_{label}_{kind}.csv"),
                  ["fpr", "tpr", "threshold"],
                  [[float(a), float(b), float(t)] for a, b, t in zip(fpr, tpr, thr)])
    for (label, kind), model in sorted(result.models.items()):
        save_model(os.path.join(out, f"model_{label}_{kind}.model"), model)
    write_manifest(out)
    print(render_report_text(result.report), end="")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pisa",
        description="Session purchase-intent prediction: data generation, "
                    "two-phase training, evaluation, and removal experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to the JSON run configuration")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out", help="output directory (default from config)")

    p = sub.add_parser("gen-data", help="write a synthetic catalog/events pair")
    common(p)
    p.add_argument("--force", action="store_true",
                   help="overwrite existing output files")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-embed",
                       help="train and freeze the item-embedding component")
    common(p)
    p.set_defaults(func=cmd_train_embed)

    p = sub.add_parser("train", help="train a purchase predictor")
    common(p)
    p.add_argument("--model-kind", required=True,
                   choices=["content", "integrated", "baseline"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score model files on the test day")
    common(p)
    p.add_argument("models", nargs="+", help="predictor model files")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a full removal protocol")
    common(p)
    p.add_argument("--protocol",
                   choices=["all-data", "cold-start", "random-removal"])
    p.add_argument("--x-list", help="comma-separated removal fractions")
    p.add_argument("--workers", type=int,
                   help=f"condition parallelism (default from config, "
                        f"machine has {os.cpu_count()} cores)")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
