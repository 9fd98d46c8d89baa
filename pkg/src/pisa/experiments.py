"""Experiment protocols: All-Data, cold-start item removal, random removal.

Each condition reduces the training set per the protocol, retrains the
embedding component and the requested predictors from scratch on the
reduced data, evaluates on the untouched test day, and tabulates dataset
statistics next to per-model AUC/AP and pairwise DeLong tests.

Cold-start removal samples the same per-category permutation for every X
under one seed, so the removed sets are nested and the cold-session
fraction is monotone in X by construction; each X taken alone is still a
uniform without-replacement sample.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import (Catalog, Session, build_catalog, build_vocabulary,
                   tokenize)
from .errors import ConfigError, DataError, PisaError
from .metrics import DeLongResult, auc, average_precision, delong_test
from .models import (Dims, TrainConfig, build_embedding_table, score_sessions,
                     train_embedding_component, train_predictor)


@dataclass(frozen=True)
class ColdStartConfig:
    removal_fraction: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.removal_fraction <= 1.0:
            raise ConfigError("removal fraction must lie in [0, 1]")


@dataclass(frozen=True)
class SessionColdness:
    session_id: str
    cold_item_count: int
    total_items: int
    is_cold: bool
    cold_ratio: float


def remove_cold_items(train_sessions: Sequence[Session],
                      category_of: dict[str, int],
                      cfg: ColdStartConfig) -> tuple[list[Session], frozenset[str]]:
    """Drop every train session containing a sampled item.

    Independently per category, floor(X * n) of the items seen in training
    are sampled without replacement (a seeded permutation prefix, so
    samples for increasing X nest). Validation/test data is never touched.
    """
    in_train = {i for s in train_sessions for i in s.item_ids}
    by_category: dict[int, list[str]] = {}
    for item_id in sorted(in_train):
        cat = category_of.get(item_id)
        if cat is not None:
            by_category.setdefault(cat, []).append(item_id)
    removed: set[str] = set()
    for cat in sorted(by_category):
        ids = by_category[cat]
        k = int(np.floor(cfg.removal_fraction * len(ids)))
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, cat]))
        perm = rng.permutation(len(ids))
        removed.update(ids[int(i)] for i in perm[:k])
    reduced = [s for s in train_sessions
               if not any(i in removed for i in s.item_ids)]
    return reduced, frozenset(removed)


def random_removal(train_sessions: Sequence[Session], n_remove: int,
                   seed: int = 0) -> list[Session]:
    """Uniformly drop n_remove sessions (order of the rest preserved)."""
    n = len(train_sessions)
    if n_remove < 0 or n_remove > n:
        raise ValueError(f"cannot remove {n_remove} of {n} sessions")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5e55]))
    dropped = set(int(i) for i in rng.choice(n, size=n_remove, replace=False))
    return [s for i, s in enumerate(train_sessions) if i not in dropped]


def classify_sessions(test_sessions: Sequence[Session],
                      train_universe: set[str]) -> list[SessionColdness]:
    """Flag each test session cold (>= 1 item unseen in training) or warm."""
    out = []
    for s in test_sessions:
        cold = sum(1 for i in s.item_ids if i not in train_universe)
        total = len(s.item_ids)
        out.append(SessionColdness(
            session_id=s.session_id, cold_item_count=cold, total_items=total,
            is_cold=cold >= 1, cold_ratio=cold / total))
    return out


def filter_test_by_cold_ratio(coldness: Sequence[SessionColdness], mode: str,
                              min_ratio: float = 0.5) -> list[str]:
    """Session ids with no cold items, or with cold ratio >= min_ratio."""
    if mode == "no_cold":
        kept = [c.session_id for c in coldness if c.cold_ratio == 0.0]
    elif mode == "min_ratio":
        if not 0.0 <= min_ratio <= 1.0:
            raise ValueError("min_ratio must lie in [0, 1]")
        kept = [c.session_id for c in coldness if c.cold_ratio >= min_ratio]
    else:
        raise ValueError(f"unknown filter mode {mode!r}")
    if not kept:
        warnings.warn(f"cold-ratio filter {mode!r} kept no sessions")
    return kept


# ---------------------------------------------------------------------------
# the full harness


@dataclass
class ExperimentData:
    catalog_rows: list[tuple[str, int, str, str]]
    n_categories: int
    train: tuple[Session, ...]
    validation: tuple[Session, ...]
    test: tuple[Session, ...]

    def category_of(self) -> dict[str, int]:
        return {r[0]: r[1] for r in self.catalog_rows}


PROTOCOLS = ("all_data", "cold_start", "random_removal")


@dataclass
class ExperimentConfig:
    protocol: str = "all_data"
    x_list: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
    models: tuple[str, ...] = ("content", "integrated", "baseline")
    seed: int = 0
    dims: Dims = field(default_factory=Dims)
    train: TrainConfig = field(default_factory=TrainConfig)
    min_word_freq: int = 1
    workers: int = 1

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.protocol != "all_data" and not self.x_list:
            raise ConfigError("removal protocols need a non-empty x_list")


@dataclass
class ModelMetrics:
    kind: str
    auc: float
    average_precision: float


@dataclass
class DeLongEntry:
    kind_a: str
    kind_b: str
    z: float
    p_value: float


@dataclass
class ConditionResult:
    label: str
    removal_fraction: float
    removed_sessions: int
    removed_items: int
    train_count: int
    train_buy_pct: float
    cold_count: int
    cold_buy_pct: float
    warm_count: int
    warm_buy_pct: float
    pct_cold: float
    metrics: list[ModelMetrics]
    delong: list[DeLongEntry]


@dataclass
class ExperimentReport:
    protocol: str
    models: tuple[str, ...]
    conditions: list[ConditionResult]
    warnings: tuple[str, ...] = ()


@dataclass
class ExperimentResult:
    report: ExperimentReport
    # (condition label, model kind) -> test scores, aligned with data.test
    scores: dict[tuple[str, str], np.ndarray]
    test_labels: np.ndarray
    # (condition label, model kind) -> trained predictor
    models: dict[tuple[str, str], object] = field(default_factory=dict)


def _buy_pct(sessions: Sequence[Session]) -> float:
    if not sessions:
        return 0.0
    return 100.0 * sum(s.label for s in sessions) / len(sessions)


def _condition_spec(cfg: ExperimentConfig) -> list[tuple[str, float]]:
    if cfg.protocol == "all_data":
        return [("all_data", 0.0)]
    return [(f"{x:g}", float(x)) for x in cfg.x_list]


def _run_condition(args: tuple) -> tuple[ConditionResult, dict[str, np.ndarray], dict]:
    data, cfg, index, label, x = args
    category_of = data.category_of()
    try:
        train = list(data.train)
        removed_items: frozenset[str] = frozenset()
        if cfg.protocol == "cold_start":
            train, removed_items = remove_cold_items(
                train, category_of, ColdStartConfig(x, cfg.seed))
        elif cfg.protocol == "random_removal":
            matched, _ = remove_cold_items(
                list(data.train), category_of, ColdStartConfig(x, cfg.seed))
            n_remove = len(data.train) - len(matched)
            train = random_removal(train, n_remove, seed=cfg.seed ^ index)
        removed_sessions = len(data.train) - len(train)

        universe = {i for s in train for i in s.item_ids}
        coldness = classify_sessions(data.test, universe)
        cold_ids = {c.session_id for c in coldness if c.is_cold}
        cold = [s for s in data.test if s.session_id in cold_ids]
        warm = [s for s in data.test if s.session_id not in cold_ids]

        scores: dict[str, np.ndarray] = {}
        models: dict[str, object] = {}
        metrics: list[ModelMetrics] = []
        delong: list[DeLongEntry] = []
        if cfg.models:
            rows_by_id = {r[0]: r for r in data.catalog_rows}
            train_rows = [rows_by_id[i] for i in sorted(universe) if i in rows_by_id]
            if not train_rows:
                raise DataError("no catalog items remain in the training set")
            vocab = build_vocabulary((f"{r[2]} {r[3]}" for r in train_rows),
                                     cfg.min_word_freq)
            catalog_train = build_catalog(train_rows, vocab, data.n_categories)
            catalog_full = build_catalog(data.catalog_rows, vocab, data.n_categories)
            cond_seed = cfg.seed ^ index
            embed_cfg = TrainConfig(max_epochs=cfg.train.max_epochs,
                                    batch_size=cfg.train.batch_size,
                                    learning_rate=cfg.train.learning_rate,
                                    seed=cond_seed)
            component, _ = train_embedding_component(catalog_train, cfg.dims,
                                                     embed_cfg)
            table = build_embedding_table(component, catalog_full)
            test_labels = np.array([s.label for s in data.test], dtype=np.int64)
            for k, kind in enumerate(cfg.models):
                model_cfg = TrainConfig(max_epochs=cfg.train.max_epochs,
                                        batch_size=cfg.train.batch_size,
                                        learning_rate=cfg.train.learning_rate,
                                        seed=cond_seed + k + 1)
                model, _ = train_predictor(kind, train, list(data.validation),
                                           table, model_cfg, cfg.dims)
                s = score_sessions(model, data.test, table)
                scores[kind] = s
                models[kind] = model
                metrics.append(ModelMetrics(
                    kind=kind, auc=auc(s, test_labels),
                    average_precision=average_precision(s, test_labels)))
            for a in range(len(cfg.models)):
                for b in range(a + 1, len(cfg.models)):
                    r: DeLongResult = delong_test(scores[cfg.models[a]],
                                                  scores[cfg.models[b]],
                                                  test_labels)
                    delong.append(DeLongEntry(cfg.models[a], cfg.models[b],
                                              r.z, r.p_value))
        result = ConditionResult(
            label=label, removal_fraction=x,
            removed_sessions=removed_sessions, removed_items=len(removed_items),
            train_count=len(train), train_buy_pct=_buy_pct(train),
            cold_count=len(cold), cold_buy_pct=_buy_pct(cold),
            warm_count=len(warm), warm_buy_pct=_buy_pct(warm),
            pct_cold=100.0 * len(cold) / len(data.test) if data.test else 0.0,
            metrics=metrics, delong=delong)
        return result, scores, models
    except PisaError as exc:
        raise type(exc)(f"condition {label!r}: {exc}") from exc


def run_experiment(data: ExperimentData, cfg: ExperimentConfig) -> ExperimentResult:
    """Run every condition of the protocol; deterministic given config+seed.

    Conditions are independent and may run in worker processes; the report
    is assembled in condition order either way.
    """
    if not data.test:
        raise DataError("experiment needs a non-empty test partition")
    spec = _condition_spec(cfg)
    jobs = [(data, cfg, index, label, x)
            for index, (label, x) in enumerate(spec)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
            outcomes = list(pool.map(_run_condition, jobs))
    else:
        outcomes = [_run_condition(j) for j in jobs]
    conditions = [c for c, _, _ in outcomes]
    scores = {(c.label, kind): s
              for c, per_model, _ in outcomes for kind, s in per_model.items()}
    models = {(c.label, kind): m
              for c, _, per_model in outcomes for kind, m in per_model.items()}
    test_labels = np.array([s.label for s in data.test], dtype=np.int64)
    notes = []
    if not data.train:
        notes.append("empty train partition")
    if not data.validation:
        notes.append("empty validation partition")
    report = ExperimentReport(protocol=cfg.protocol, models=cfg.models,
                              conditions=conditions, warnings=tuple(notes))
    return ExperimentResult(report=report, scores=scores,
                            test_labels=test_labels, models=models)


# ---------------------------------------------------------------------------
# per-category analysis


@dataclass
class CategoryRow:
    category_id: int
    item_count: int
    mean_description_length: float
    session_count: int
    auc_by_model: dict[str, Optional[float]]


@dataclass
class CategoryReport:
    rows: list[CategoryRow]
    unassigned_sessions: int


def session_category(session: Session, category_of: dict[str, int]) -> Optional[int]:
    """Modal category of the clicked items; ties break to the lowest id."""
    votes: dict[int, int] = {}
    for i in session.item_ids:
        cat = category_of.get(i)
        if cat is not None:
            votes[cat] = votes.get(cat, 0) + 1
    if not votes:
        return None
    best = max(votes.values())
    return min(c for c, v in votes.items() if v == best)


def per_category_report(test_sessions: Sequence[Session], catalog: Catalog,
                        model_scores: dict[str, np.ndarray]) -> CategoryReport:
    """Per-category AUC (single-class categories flagged as undefined),
    item counts, mean description length and session counts."""
    category_of = {it.item_id: it.category_id for it in catalog.items.values()}
    assigned: dict[int, list[int]] = {}
    unassigned = 0
    for idx, s in enumerate(test_sessions):
        cat = session_category(s, category_of)
        if cat is None:
            unassigned += 1
        else:
            assigned.setdefault(cat, []).append(idx)
    labels = np.array([s.label for s in test_sessions], dtype=np.int64)
    rows = []
    for cat in range(1, catalog.n_categories + 1):
        items = [it for it in catalog.items.values() if it.category_id == cat]
        idx = np.array(assigned.get(cat, []), dtype=np.int64)
        auc_by_model: dict[str, Optional[float]] = {}
        for kind in sorted(model_scores):
            y = labels[idx]
            if len(idx) and 0 < y.sum() < len(y):
                auc_by_model[kind] = auc(model_scores[kind][idx], y)
            else:
                auc_by_model[kind] = None  # undefined: single class or empty
        rows.append(CategoryRow(
            category_id=cat,
            item_count=len(items),
            mean_description_length=(float(np.mean([len(it.description_tokens)
                                                    for it in items]))
                                     if items else 0.0),
            session_count=int(len(idx)),
            auc_by_model=auc_by_model))
    return CategoryReport(rows=rows, unassigned_sessions=unassigned)


# ---------------------------------------------------------------------------
# rendering


def render_report_text(report: ExperimentReport) -> str:
    """Aligned table in the removal-experiment layout, then model metrics."""
    header = ["% Removal", "# Sessions -- train set", "# 'Cold' sessions -- test set",
              "# 'Warm' sessions -- test set", "% 'Cold' sessions"]
    lines = [f"protocol: {report.protocol}"]
    for w in report.warnings:
        lines.append(f"warning: {w}")
    rows = [header]
    for c in report.conditions:
        rows.append([
            c.label if report.protocol == "all_data" else f"{100 * c.removal_fraction:g}%",
            f"{c.train_count} ({c.train_buy_pct:.2f}%)",
            f"{c.cold_count} ({c.cold_buy_pct:.2f}%)",
            f"{c.warm_count} ({c.warm_buy_pct:.2f}%)",
            f"{c.pct_cold:.2f}%",
        ])
    widths = [max(len(r[k]) for r in rows) for k in range(len(header))]
    for r in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
    for c in report.conditions:
        for m in c.metrics:
            lines.append(f"[{c.label}] {m.kind}: auc={m.auc:.4f} "
                         f"ap={m.average_precision:.4f}")
        for d in c.delong:
            lines.append(f"[{c.label}] delong {d.kind_a} vs {d.kind_b}: "
                         f"z={d.z:.3f} p={d.p_value:.6f}")
    return "\n".join(lines) + "\n"


def report_csv_rows(report: ExperimentReport) -> tuple[list[str], list[list]]:
    header = ["condition", "removal_fraction", "removed_sessions",
              "train_sessions", "train_buy_pct", "cold_sessions",
              "cold_buy_pct", "warm_sessions", "warm_buy_pct",
              "pct_cold_sessions", "model", "auc", "average_precision"]
    rows = []
    for c in report.conditions:
        base = [c.label, c.removal_fraction, c.removed_sessions, c.train_count,
                c.train_buy_pct, c.cold_count, c.cold_buy_pct, c.warm_count,
                c.warm_buy_pct, c.pct_cold]
        if c.metrics:
            for m in c.metrics:
                rows.append(base + [m.kind, m.auc, m.average_precision])
        else:
            rows.append(base + ["", "", ""])
    return header, rows


def delong_csv_rows(report: ExperimentReport) -> tuple[list[str], list[list]]:
    header = ["condition", "model_a", "model_b", "z", "p_value"]
    rows = [[c.label, d.kind_a, d.kind_b, d.z, d.p_value]
            for c in report.conditions for d in c.delong]
    return header, rows
