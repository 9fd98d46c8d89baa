"""Seeded synthetic e-commerce data with a planted, tunable content signal.

Categories own disjoint signature words; a shared buy-signal word pool
plants per-item "buyability". A session's purchase probability is
sigmoid(logit(base_rate) + beta * mean buyability of its clicked items),
so beta = 0 reproduces the base rate exactly and the retained true
probabilities give a Bayes upper bound for any learned model.

Item buyability mixes a text-visible part (buy-signal word count, with a
category-level tendency) and a small id-only random part that no text
model can see; ID-based models can therefore hold a modest edge on warm
data while text carries the bulk of the signal to cold items.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Event, Session, sessionize
from .errors import ConfigError
from .metrics import auc

DEFAULT_LENGTH_WEIGHTS = (0.30, 0.22, 0.15, 0.10, 0.07, 0.05, 0.03, 0.02,
                          0.02, 0.01, 0.01, 0.01, 0.005, 0.005)


@dataclass
class GeneratorConfig:
    n_categories: int = 13
    items_per_category: int = 20
    vocab_size: int = 400
    signature_words_per_category: int = 6
    buy_signal_words: int = 12
    n_users: int = 12_000
    n_sessions: int = 20_000
    session_length_weights: tuple[float, ...] = DEFAULT_LENGTH_WEIGHTS
    base_buy_rate: float = 0.05
    content_signal_strength: float = 6.0  # beta
    category_stickiness: float = 0.93
    popularity_exponent: float = 1.3
    id_noise_weight: float = 0.3
    buy_tendency_range: tuple[float, float] = (0.004, 0.95)
    tendency_concentration: float = 1.5
    id_noise_concentration: float = 5.0
    max_buy_words_per_item: int = 8
    test_only_fraction: float = 0.0
    n_days: int = 6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_categories < 2:
            raise ConfigError("need at least 2 categories")
        if self.items_per_category < 1 or self.n_sessions < 1 or self.n_users < 1:
            raise ConfigError("items, sessions and users must be positive")
        if not 0.0 <= self.base_buy_rate <= 1.0:
            raise ConfigError("base_buy_rate must lie in [0, 1]")
        if self.content_signal_strength < 0:
            raise ConfigError("content_signal_strength must be non-negative")
        if not 0.0 <= self.test_only_fraction < 1.0:
            raise ConfigError("test_only_fraction must lie in [0, 1)")
        if not 0.0 <= self.id_noise_weight <= 1.0:
            raise ConfigError("id_noise_weight must lie in [0, 1]")
        if self.n_days < 3:
            raise ConfigError("need at least 3 days for a chronological split")
        if min(self.session_length_weights) < 0 or sum(self.session_length_weights) <= 0:
            raise ConfigError("session_length_weights must be non-negative and sum > 0")

    @property
    def filler_words(self) -> int:
        reserved = (self.n_categories * self.signature_words_per_category
                    + self.buy_signal_words)
        return self.vocab_size - reserved


@dataclass
class SyntheticCatalog:
    """Catalog rows in file format plus the planted ground truth."""

    rows: list[tuple[str, int, str, str]]
    buyability: dict[str, float]
    category_of: dict[str, int]
    test_only: frozenset[str]
    popularity: dict[str, float] = field(repr=False)

    @property
    def item_ids(self) -> list[str]:
        return [r[0] for r in self.rows]


@dataclass
class SyntheticSessions:
    sessions: list[Session]
    true_probabilities: np.ndarray  # aligned with sessions
    events: list[Event]

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.sessions], dtype=np.int64)


def _category_tendencies(cfg: GeneratorConfig) -> np.ndarray:
    lo, hi = cfg.buy_tendency_range
    k = np.arange(cfg.n_categories)
    return lo * (hi / lo) ** (k / max(cfg.n_categories - 1, 1))


def generate_catalog(cfg: GeneratorConfig) -> SyntheticCatalog:
    """Items with category-specific signature words and planted buyability."""
    if cfg.filler_words < 20:
        raise ConfigError(
            f"vocab_size {cfg.vocab_size} leaves only {cfg.filler_words} filler "
            f"words; need at least 20 beyond signatures and buy-signal words")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 11]))
    sig_words = {c: [f"sig{c}w{k}" for k in range(cfg.signature_words_per_category)]
                 for c in range(1, cfg.n_categories + 1)}
    buy_words = [f"buyword{k}" for k in range(cfg.buy_signal_words)]
    fillers = [f"filler{k}" for k in range(cfg.filler_words)]
    tendencies = _category_tendencies(cfg)

    rows = []
    buyability: dict[str, float] = {}
    category_of: dict[str, int] = {}
    popularity: dict[str, float] = {}
    test_only: set[str] = set()
    rho = cfg.id_noise_weight
    kappa = cfg.tendency_concentration
    for c in range(1, cfg.n_categories + 1):
        mu = float(tendencies[c - 1])
        n = cfg.items_per_category
        reserve = rng.permutation(n)[:int(np.floor(cfg.test_only_fraction * n))]
        reserved = set(int(i) for i in reserve)
        zipf = (np.arange(1, n + 1, dtype=float) ** -cfg.popularity_exponent)
        for j in range(n):
            item_id = f"item{c:02d}x{j:03d}"
            t = float(rng.beta(kappa * mu, kappa * (1.0 - mu)))
            length = int(rng.integers(6, 17))
            # buyability must reflect the buy words actually written, so cap
            # the draw by the room the description leaves before deriving it
            n_buy = min(int(rng.binomial(cfg.max_buy_words_per_item, t)),
                        min(cfg.buy_signal_words, length - 2))
            s = n_buy / cfg.max_buy_words_per_item
            # id-only part centered on the item's own tendency: invisible in
            # text but stable per item, so ID models can learn it on warm data
            ku = cfg.id_noise_concentration
            u = float(rng.beta(ku * t, ku * (1.0 - t))) if 0.0 < t < 1.0 else t
            buyability[item_id] = (1.0 - rho) * s + rho * u

            n_sig = max(1, min(int(rng.integers(2, 6)), length - n_buy))
            desc = list(rng.choice(sig_words[c], size=n_sig, replace=False))
            desc += list(rng.choice(buy_words, size=n_buy, replace=False))
            desc += list(rng.choice(fillers, size=length - len(desc), replace=True))
            desc = [str(w) for w in rng.permutation(desc)]
            title_len = int(rng.integers(1, 5))
            title = [str(rng.choice(sig_words[c]))]
            title += [str(w) for w in rng.choice(fillers, size=title_len - 1, replace=True)]

            rows.append((item_id, c, " ".join(title), " ".join(desc)))
            category_of[item_id] = c
            popularity[item_id] = float(zipf[j])
            if j in reserved:
                test_only.add(item_id)
    return SyntheticCatalog(rows=rows, buyability=buyability,
                            category_of=category_of,
                            test_only=frozenset(test_only),
                            popularity=popularity)


def _pools(catalog: SyntheticCatalog, cfg: GeneratorConfig):
    """Per-category (ids, normalized weights) for train-pool and test-pool days."""
    by_cat_train: dict[int, tuple[list[str], np.ndarray]] = {}
    by_cat_test: dict[int, tuple[list[str], np.ndarray]] = {}
    for c in range(1, cfg.n_categories + 1):
        ids = [i for i in catalog.item_ids if catalog.category_of[i] == c]
        train_ids = [i for i in ids if i not in catalog.test_only]
        test_ids = [i for i in ids if i in catalog.test_only] or train_ids
        for target, pool in ((by_cat_train, train_ids), (by_cat_test, test_ids)):
            if not pool:
                raise ConfigError(f"category {c} has no items left for sampling")
            w = np.array([catalog.popularity[i] for i in pool])
            target[c] = (pool, w / w.sum())
    return by_cat_train, by_cat_test


def generate_sessions(catalog: SyntheticCatalog,
                      cfg: GeneratorConfig) -> SyntheticSessions:
    """Sticky-category clickstreams with sampled purchase labels.

    Sessions on the final day draw from the test-only item pool (when one
    is configured), making every one of them genuinely cold; all earlier
    days draw from the remaining items. Each user gets at most one session
    per day and never two on consecutive days, so the emitted event stream
    sessionizes back into exactly the generated sessions.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 13]))
    by_cat_train, by_cat_test = _pools(catalog, cfg)
    lengths = np.arange(1, len(cfg.session_length_weights) + 1)
    lweights = np.asarray(cfg.session_length_weights, dtype=float)
    lweights = lweights / lweights.sum()
    base_logit = float(np.log(cfg.base_buy_rate / (1.0 - cfg.base_buy_rate)))
    beta = cfg.content_signal_strength

    day_of = rng.integers(0, cfg.n_days, size=cfg.n_sessions)
    events: list[Event] = []
    truth: dict[tuple[str, float], float] = {}
    prev_day_users: set[str] = set()
    for day in range(cfg.n_days):
        count = int((day_of == day).sum())
        available = [f"user{u:05d}" for u in range(cfg.n_users)
                     if f"user{u:05d}" not in prev_day_users]
        if count > len(available):
            raise ConfigError(
                f"day {day} needs {count} distinct users but only "
                f"{len(available)} are free; increase n_users or n_days")
        users = [available[int(k)] for k in
                 rng.choice(len(available), size=count, replace=False)]
        prev_day_users = set(users)
        pools = by_cat_test if day == cfg.n_days - 1 else by_cat_train
        for user in users:
            home = int(rng.integers(1, cfg.n_categories + 1))
            length = int(rng.choice(lengths, p=lweights))
            start = day * 86400.0 + float(rng.integers(0, 80000))
            ts = start
            items = []
            for _ in range(length):
                if rng.random() < cfg.category_stickiness:
                    cat = home
                else:
                    cat = int(rng.integers(1, cfg.n_categories + 1))
                ids, w = pools[cat]
                items.append(ids[int(rng.choice(len(ids), p=w))])
                events.append(Event(ts, user, items[-1], "click"))
                ts += float(rng.integers(30, 300))
            mean_b = float(np.mean([catalog.buyability[i] for i in items]))
            if beta == 0.0:
                p = cfg.base_buy_rate  # exact, not a logit round-trip
            else:
                p = 1.0 / (1.0 + np.exp(-(base_logit + beta * mean_b)))
            truth[(user, start)] = p
            if rng.random() < p:
                events.append(Event(ts + float(rng.integers(10, 60)), user,
                                    items[-1], "buy"))

    events.sort(key=lambda e: (e.timestamp, e.user_id, e.event_type, e.item_id))
    sessions = sessionize(events)
    probs = np.array([truth[(s.user_id, s.clicks[0].timestamp)] for s in sessions])
    assert len(sessions) == cfg.n_sessions
    return SyntheticSessions(sessions=sessions, true_probabilities=probs,
                             events=events)


def generate_dataset(cfg: GeneratorConfig) -> tuple[SyntheticCatalog, SyntheticSessions]:
    catalog = generate_catalog(cfg)
    return catalog, generate_sessions(catalog, cfg)


def bayes_oracle_auc(sessions: SyntheticSessions,
                     mask: Optional[np.ndarray] = None) -> float:
    """AUC of the true generative probability used as the score.

    No learned model can beat this benchmark except by sampling noise.
    """
    labels = sessions.labels()
    probs = sessions.true_probabilities
    if mask is not None:
        labels, probs = labels[mask], probs[mask]
    return auc(probs, labels)
