import numpy as np
import pytest

from pisa.data import save_catalog_file, sessionize, tokenize
from pisa.errors import ConfigError
from pisa.synth import (GeneratorConfig, SyntheticCatalog, bayes_oracle_auc,
                        generate_catalog, generate_dataset, generate_sessions)


def small_cfg(**kw):
    base = dict(n_categories=4, items_per_category=8, vocab_size=120,
                n_users=3000, n_sessions=3000, n_days=4, seed=42)
    base.update(kw)
    return GeneratorConfig(**base)


# ---------------------------------------------------------------------------
# catalog


def test_catalog_counts_and_disjoint_signatures():
    cfg = GeneratorConfig(n_categories=2, items_per_category=5, vocab_size=80,
                          n_sessions=10, n_users=100, seed=1)
    cat = generate_catalog(cfg)
    assert len(cat.rows) == 10
    # signature words of one category never appear in the other's text
    sigs_seen = {1: set(), 2: set()}
    for item_id, c, title, desc in cat.rows:
        for tok in tokenize(title + " " + desc):
            if tok.startswith("sig"):
                sigs_seen[c].add(tok)
    assert not (sigs_seen[1] & sigs_seen[2])
    assert all(s.startswith("sig1") for s in sigs_seen[1])


def test_catalog_mean_description_length():
    cfg = GeneratorConfig(items_per_category=77, seed=3, n_sessions=10,
                          n_users=100)  # 13 * 77 = 1001 items
    cat = generate_catalog(cfg)
    lengths = [len(tokenize(desc)) for _, _, _, desc in cat.rows]
    assert len(lengths) >= 1000
    assert 9.0 <= np.mean(lengths) <= 13.0
    assert min(lengths) >= 6 and max(lengths) <= 16


def test_catalog_same_seed_byte_identical(tmp_path):
    cfg = small_cfg()
    a, b = generate_catalog(cfg), generate_catalog(cfg)
    save_catalog_file(tmp_path / "a.tsv", a.rows)
    save_catalog_file(tmp_path / "b.tsv", b.rows)
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
    assert a.buyability == b.buyability


def test_catalog_buyability_in_unit_interval():
    cat = generate_catalog(small_cfg())
    vals = np.array(list(cat.buyability.values()))
    assert (vals >= 0).all() and (vals <= 1).all()


def test_catalog_vocab_too_small():
    with pytest.raises(ConfigError):
        generate_catalog(GeneratorConfig(vocab_size=90, n_sessions=10, n_users=100))


# ---------------------------------------------------------------------------
# sessions


def test_zero_signal_buy_rate_matches_base():
    cfg = GeneratorConfig(n_sessions=50_000, n_users=30_000, n_days=8,
                          content_signal_strength=0.0, seed=11)
    _, ss = generate_dataset(cfg)
    rate = ss.labels().mean()
    assert abs(rate - cfg.base_buy_rate) <= 0.005
    # beta = 0 means every session probability equals the base rate exactly
    assert (ss.true_probabilities == cfg.base_buy_rate).all()


def test_strong_signal_oracle_auc():
    cfg = GeneratorConfig(n_sessions=12_000, seed=1, content_signal_strength=8.0)
    _, ss = generate_dataset(cfg)
    assert bayes_oracle_auc(ss) >= 0.9


def test_oracle_auc_monotone_in_signal_strength():
    aucs = []
    for beta in (0.0, 2.0, 4.0, 8.0):
        cfg = GeneratorConfig(n_sessions=8_000, seed=6, content_signal_strength=beta)
        _, ss = generate_dataset(cfg)
        aucs.append(bayes_oracle_auc(ss))
    assert 0.48 <= aucs[0] <= 0.52
    assert all(a <= b for a, b in zip(aucs, aucs[1:]))


def test_sessions_deterministic_under_seed():
    cfg = small_cfg()
    cat = generate_catalog(cfg)
    s1 = generate_sessions(cat, cfg)
    s2 = generate_sessions(cat, cfg)
    assert s1.sessions == s2.sessions
    assert (s1.true_probabilities == s2.true_probabilities).all()
    assert s1.events == s2.events


def test_different_seeds_differ():
    c1, s1 = generate_dataset(small_cfg(seed=1))
    c2, s2 = generate_dataset(small_cfg(seed=2))
    assert s1.events != s2.events


def test_events_stream_sessionizes_back_exactly():
    cfg = small_cfg()
    _, ss = generate_dataset(cfg)
    rebuilt = sessionize(ss.events)
    assert rebuilt == ss.sessions
    assert len(rebuilt) == cfg.n_sessions


def test_session_lengths_cover_pruning_range():
    cfg = small_cfg(n_sessions=6000, n_users=6000)
    _, ss = generate_dataset(cfg)
    lengths = {s.length for s in ss.sessions}
    assert max(lengths) > 10  # pruning path exercised downstream
    assert 1 in lengths


def test_labels_match_buy_events():
    cfg = small_cfg()
    _, ss = generate_dataset(cfg)
    buys_by_user_day = {(e.user_id, int(e.timestamp // 86400))
                        for e in ss.events if e.event_type == "buy"}
    for s in ss.sessions:
        assert s.label == (1 if (s.user_id, s.day) in buys_by_user_day else 0)


# ---------------------------------------------------------------------------
# cold-start marking


def test_test_only_items_confined_to_last_day():
    cfg = small_cfg(test_only_fraction=0.5, n_sessions=4000)
    cat, ss = generate_dataset(cfg)
    assert cat.test_only
    last_day = cfg.n_days - 1
    for s in ss.sessions:
        ids = set(s.item_ids)
        if s.day == last_day:
            assert ids <= cat.test_only
        else:
            assert not (ids & cat.test_only)


def test_all_last_day_sessions_are_cold():
    cfg = small_cfg(test_only_fraction=0.5, n_sessions=4000)
    cat, ss = generate_dataset(cfg)
    train_universe = set()
    for s in ss.sessions:
        if s.day < cfg.n_days - 1:
            train_universe |= set(s.item_ids)
    for s in ss.sessions:
        if s.day == cfg.n_days - 1:
            assert set(s.item_ids) - train_universe


def test_config_validation():
    with pytest.raises(ConfigError):
        GeneratorConfig(n_categories=1)
    with pytest.raises(ConfigError):
        GeneratorConfig(test_only_fraction=1.0)
    with pytest.raises(ConfigError):
        GeneratorConfig(base_buy_rate=1.5)
    with pytest.raises(ConfigError):
        GeneratorConfig(n_days=2)
