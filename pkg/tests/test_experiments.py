import warnings as warnings_mod

import numpy as np
import pytest

from pisa.data import ClickEvent, Session, build_catalog, build_vocabulary, chronological_split
from pisa.errors import DataError
from pisa.experiments import (ColdStartConfig, ExperimentConfig,
                              ExperimentData, classify_sessions,
                              delong_csv_rows, filter_test_by_cold_ratio,
                              per_category_report, remove_cold_items,
                              random_removal, render_report_text,
                              report_csv_rows, run_experiment,
                              session_category)
from pisa.metrics import auc
from pisa.models import Dims, TrainConfig
from pisa.synth import GeneratorConfig, generate_dataset

TINY_DIMS = Dims(word_dim=12, gru_hidden=16, embed_dim=10, id_dim=12,
                 merge_dim=16, lstm_hidden=20)


def make_session(sid, user, item_ids, label=0, day=0):
    clicks = tuple(ClickEvent(i, day * 86400.0 + 10.0 * k, user)
                   for k, i in enumerate(item_ids))
    return Session(sid, user, clicks, label, day)


def two_category_world():
    category_of = {f"a{i}": 1 for i in range(5)} | {f"b{i}": 2 for i in range(5)}
    rng = np.random.default_rng(77)
    sessions = []
    for k in range(60):
        pool = [f"a{i}" for i in range(5)] if k % 2 else [f"b{i}" for i in range(5)]
        items = [pool[int(j)] for j in rng.integers(0, 5, size=int(rng.integers(1, 5)))]
        sessions.append(make_session(f"s{k}", f"u{k}", items, label=int(k % 7 == 0)))
    return category_of, sessions


@pytest.fixture(scope="module")
def synth_world():
    cfg = GeneratorConfig(n_sessions=6000, n_users=6000, seed=21, n_days=4)
    cat, ss = generate_dataset(cfg)
    split = chronological_split(ss.sessions, val_day=2, test_day=3)
    data = ExperimentData(catalog_rows=cat.rows, n_categories=cfg.n_categories,
                          train=split.train, validation=split.validation,
                          test=split.test)
    return cfg, cat, data


# ---------------------------------------------------------------------------
# remove_cold_items


def test_remove_zero_fraction_is_identity():
    category_of, sessions = two_category_world()
    reduced, removed = remove_cold_items(sessions, category_of,
                                         ColdStartConfig(0.0, seed=5))
    assert reduced == sessions and removed == frozenset()


def test_remove_two_of_five_per_category():
    category_of, sessions = two_category_world()
    reduced, removed = remove_cold_items(sessions, category_of,
                                         ColdStartConfig(0.4, seed=5))
    per_cat = {1: 0, 2: 0}
    for item in removed:
        per_cat[category_of[item]] += 1
    assert per_cat == {1: 2, 2: 2}
    for s in reduced:
        assert not (set(s.item_ids) & removed)
    # every dropped session really contained a removed item
    kept_ids = {s.session_id for s in reduced}
    for s in sessions:
        if s.session_id not in kept_ids:
            assert set(s.item_ids) & removed


def test_remove_everything():
    category_of, sessions = two_category_world()
    reduced, removed = remove_cold_items(sessions, category_of,
                                         ColdStartConfig(1.0, seed=5))
    assert reduced == []
    assert len(removed) == 10


def test_removed_sets_nest_across_fractions():
    category_of, sessions = two_category_world()
    previous = frozenset()
    for x in (0.2, 0.4, 0.6, 0.8, 1.0):
        _, removed = remove_cold_items(sessions, category_of,
                                       ColdStartConfig(x, seed=9))
        assert previous <= removed
        previous = removed


def test_removal_only_touches_items_seen_in_train():
    category_of, sessions = two_category_world()
    category_of["ghost"] = 1  # catalog item that never occurs in a session
    _, removed = remove_cold_items(sessions, category_of,
                                   ColdStartConfig(1.0, seed=2))
    assert "ghost" not in removed


# ---------------------------------------------------------------------------
# random_removal


def test_random_removal_identity_and_total():
    _, sessions = two_category_world()
    assert random_removal(sessions, 0, seed=1) == sessions
    assert random_removal(sessions, len(sessions), seed=1) == []
    with pytest.raises(ValueError):
        random_removal(sessions, len(sessions) + 1, seed=1)


def test_random_removal_preserves_order():
    _, sessions = two_category_world()
    reduced = random_removal(sessions, 20, seed=3)
    assert len(reduced) == 40
    pos = {s.session_id: k for k, s in enumerate(sessions)}
    assert all(pos[a.session_id] < pos[b.session_id]
               for a, b in zip(reduced, reduced[1:]))


def test_matched_removal_counts(synth_world):
    cfg, cat, data = synth_world
    category_of = data.category_of()
    for x in (0.1, 0.3, 0.5):
        reduced, _ = remove_cold_items(list(data.train), category_of,
                                       ColdStartConfig(x, seed=4))
        n_remove = len(data.train) - len(reduced)
        randomly = random_removal(list(data.train), n_remove, seed=11)
        assert len(randomly) == len(reduced)


# ---------------------------------------------------------------------------
# coldness classification and filtering


def test_classify_all_seen():
    _, sessions = two_category_world()
    universe = {i for s in sessions for i in s.item_ids}
    for c in classify_sessions(sessions, universe):
        assert not c.is_cold and c.cold_ratio == 0.0


def test_classify_half_cold():
    s = make_session("s", "u", ["a0", "a1", "x9", "y9"])
    (c,) = classify_sessions([s], {"a0", "a1"})
    assert c.is_cold and c.cold_item_count == 2
    assert c.cold_ratio == 0.5 and c.total_items == 4


def test_cold_warm_partition_counts():
    _, sessions = two_category_world()
    all_items = sorted({i for s in sessions for i in s.item_ids})
    rng = np.random.default_rng(13)
    for _ in range(20):
        k = int(rng.integers(0, len(all_items) + 1))
        universe = set(np.array(all_items)[rng.permutation(len(all_items))[:k]])
        coldness = classify_sessions(sessions, universe)
        n_cold = sum(c.is_cold for c in coldness)
        n_warm = sum(not c.is_cold for c in coldness)
        assert n_cold + n_warm == len(sessions)
        for c in coldness:
            assert c.is_cold == (c.cold_item_count >= 1)


def test_filter_no_cold_on_all_warm_keeps_everything():
    _, sessions = two_category_world()
    universe = {i for s in sessions for i in s.item_ids}
    coldness = classify_sessions(sessions, universe)
    assert len(filter_test_by_cold_ratio(coldness, "no_cold")) == len(sessions)


def test_filter_min_ratio_boundary_inclusive():
    s = make_session("s", "u", ["a0", "a1", "x9", "y9"])
    coldness = classify_sessions([s], {"a0", "a1"})
    assert filter_test_by_cold_ratio(coldness, "min_ratio", 0.5) == ["s"]


def test_filter_partition_property():
    _, sessions = two_category_world()
    rng = np.random.default_rng(17)
    all_items = sorted({i for s in sessions for i in s.item_ids})
    for _ in range(20):
        k = int(rng.integers(1, len(all_items)))
        universe = set(np.array(all_items)[rng.permutation(len(all_items))[:k]])
        coldness = classify_sessions(sessions, universe)
        with warnings_mod.catch_warnings():
            warnings_mod.simplefilter("ignore")
            warm_ids = set(filter_test_by_cold_ratio(coldness, "no_cold"))
            cold_ids = set(filter_test_by_cold_ratio(coldness, "min_ratio", 1e-9))
        assert warm_ids | cold_ids == {s.session_id for s in sessions}
        assert not (warm_ids & cold_ids)


def test_filter_empty_result_warns():
    s = make_session("s", "u", ["a0"])
    coldness = classify_sessions([s], set())
    with pytest.warns(UserWarning):
        filter_test_by_cold_ratio(coldness, "no_cold")


# ---------------------------------------------------------------------------
# per-category analysis


def test_session_category_modal_and_tie_break():
    category_of = {"a": 1, "b": 2, "c": 2}
    assert session_category(make_session("s", "u", ["b", "c", "a"]), category_of) == 2
    assert session_category(make_session("s", "u", ["a", "b"]), category_of) == 1
    assert session_category(make_session("s", "u", ["zz"]), category_of) is None


def test_per_category_report_single_category():
    rows = [(f"i{k}", 1, "w", "one two three") for k in range(4)]
    vocab = build_vocabulary(["w one two three"], 1)
    catalog = build_catalog(rows, vocab, n_categories=1)
    sessions = [make_session(f"s{k}", "u", [f"i{k % 4}"], label=k % 2)
                for k in range(10)]
    scores = {"content": np.linspace(0.1, 0.9, 10)}
    rep = per_category_report(sessions, catalog, scores)
    assert len(rep.rows) == 1
    row = rep.rows[0]
    labels = np.array([s.label for s in sessions])
    assert row.auc_by_model["content"] == auc(scores["content"], labels)
    assert row.item_count == 4 and row.session_count == 10
    assert row.mean_description_length == 3.0


def test_per_category_report_flags_single_class():
    rows = [("i0", 1, "w", "x"), ("i1", 2, "w", "y")]
    vocab = build_vocabulary(["w x y"], 1)
    catalog = build_catalog(rows, vocab, n_categories=2)
    sessions = [make_session("s0", "u", ["i0"], label=1),
                make_session("s1", "u", ["i0"], label=0),
                make_session("s2", "u", ["i1"], label=0)]
    rep = per_category_report(sessions, catalog, {"m": np.array([0.9, 0.2, 0.4])})
    assert rep.rows[0].auc_by_model["m"] is not None
    assert rep.rows[1].auc_by_model["m"] is None  # only negatives
    assert sum(r.session_count for r in rep.rows) + rep.unassigned_sessions == 3


# ---------------------------------------------------------------------------
# run_experiment


def quick_cfg(**kw):
    base = dict(protocol="all_data", models=("content", "integrated", "baseline"),
                seed=5, dims=TINY_DIMS,
                train=TrainConfig(max_epochs=2, batch_size=256, seed=5))
    base.update(kw)
    return ExperimentConfig(**base)


def test_all_data_report_schema(synth_world):
    _, _, data = synth_world
    result = run_experiment(data, quick_cfg())
    rep = result.report
    assert len(rep.conditions) == 1
    cond = rep.conditions[0]
    assert len(cond.metrics) == 3
    assert {m.kind for m in cond.metrics} == {"content", "integrated", "baseline"}
    assert len(cond.delong) == 3  # all pairs
    assert cond.cold_count + cond.warm_count == len(data.test)
    assert 0 <= cond.pct_cold <= 100
    for m in cond.metrics:
        assert 0.0 <= m.auc <= 1.0 and 0.0 < m.average_precision <= 1.0
    # every score vector aligns with the test set
    for (label, kind), s in result.scores.items():
        assert len(s) == len(data.test)
    text = render_report_text(rep)
    assert "# Sessions -- train set" in text and "% 'Cold' sessions" in text
    header, rows = report_csv_rows(rep)
    assert len(rows) == 3 and len(header) == len(rows[0])
    dheader, drows = delong_csv_rows(rep)
    assert len(drows) == 3


def test_cold_start_pct_cold_monotone_stats_only(synth_world):
    _, _, data = synth_world
    cfg = quick_cfg(protocol="cold_start",
                    x_list=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8),
                    models=())
    result = run_experiment(data, cfg)
    pct = [c.pct_cold for c in result.report.conditions]
    assert all(a <= b for a, b in zip(pct, pct[1:]))
    assert pct[-1] > pct[0]


def test_random_removal_keeps_cold_fraction_small(synth_world):
    # matched-count removal up to ~2/3 of the training set: dropping whole
    # sessions uniformly barely creates cold items, unlike item removal
    _, _, data = synth_world
    cfg = quick_cfg(protocol="random_removal", x_list=(0.1, 0.2, 0.3, 0.4),
                    models=())
    result = run_experiment(data, cfg)
    for c in result.report.conditions:
        assert c.pct_cold < 5.0
    # matched counts against the cold-start run with the same seed
    cold = run_experiment(data, quick_cfg(protocol="cold_start",
                                          x_list=(0.1, 0.2, 0.3, 0.4),
                                          models=()))
    for rc, cc in zip(result.report.conditions, cold.report.conditions):
        assert rc.train_count == cc.train_count


def test_experiment_deterministic_and_parallel_consistent(synth_world):
    _, _, data = synth_world
    cfg = quick_cfg(protocol="cold_start", x_list=(0.2, 0.5),
                    models=("baseline",))
    r1 = run_experiment(data, cfg)
    r2 = run_experiment(data, cfg)
    assert render_report_text(r1.report) == render_report_text(r2.report)
    for key in r1.scores:
        assert (r1.scores[key] == r2.scores[key]).all()
    cfg_par = quick_cfg(protocol="cold_start", x_list=(0.2, 0.5),
                        models=("baseline",), workers=2)
    r3 = run_experiment(data, cfg_par)
    assert render_report_text(r3.report) == render_report_text(r1.report)
    for key in r1.scores:
        assert (r1.scores[key] == r3.scores[key]).all()


def test_degenerate_condition_carries_context(synth_world):
    _, _, data = synth_world
    cfg = quick_cfg(protocol="cold_start", x_list=(1.0,), models=("baseline",))
    with pytest.raises(DataError, match="condition '1'"):
        run_experiment(data, cfg)


def test_experiment_requires_test_data(synth_world):
    _, _, data = synth_world
    empty = ExperimentData(data.catalog_rows, data.n_categories,
                           data.train, data.validation, ())
    with pytest.raises(DataError):
        run_experiment(empty, quick_cfg(models=()))
