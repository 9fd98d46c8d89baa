import string
from collections import Counter

import numpy as np
import pytest

from pisa.data import (Event, Item, OOV_INDEX, PAD_INDEX, PaddedSequence,
                       Vocabulary, build_catalog, build_vocabulary,
                       chronological_split, item_text, load_catalog_file,
                       load_events_file, pad_or_prune, save_catalog_file,
                       save_events_file, sessionize, tokenize)
from pisa.errors import DataError

H = 3600.0


def click(t, user="u1", item="i1"):
    return Event(t, user, item, "click")


def buy(t, user="u1", item="i1"):
    return Event(t, user, item, "buy")


# ---------------------------------------------------------------------------
# tokenizer


def test_tokenize_rule():
    assert tokenize("Blue Garden-Chair, 2pcs") == ["blue", "garden", "chair", "2pcs"]


def test_tokenize_empty():
    assert tokenize("") == []
    assert tokenize("!!! --- ###") == []


def test_tokenize_idempotent_on_random_ascii():
    rng = np.random.default_rng(2001)
    alphabet = string.ascii_letters + string.digits + string.punctuation + " \t"
    for _ in range(1000):
        n = int(rng.integers(0, 40))
        text = "".join(alphabet[i] for i in rng.integers(0, len(alphabet), size=n))
        once = tokenize(text)
        assert tokenize(" ".join(once)) == once


def test_tokenize_output_is_lowercase_alnum():
    rng = np.random.default_rng(2003)
    alphabet = string.printable
    for _ in range(200):
        n = int(rng.integers(0, 60))
        text = "".join(alphabet[i] for i in rng.integers(0, len(alphabet), size=n))
        for tok in tokenize(text):
            assert tok and all(c in string.ascii_lowercase + string.digits for c in tok)


# ---------------------------------------------------------------------------
# vocabulary


def test_vocabulary_basic_ordering():
    v = build_vocabulary(["a a b"], min_freq=1)
    assert v.index("a") == 2 and v.index("b") == 3
    assert v.size == 4


def test_vocabulary_min_freq_cuts_to_oov():
    v = build_vocabulary(["a a b"], min_freq=2)
    assert v.index("a") == 2
    assert v.index("b") == OOV_INDEX


def test_vocabulary_empty_corpus():
    v = build_vocabulary([], min_freq=1)
    assert v.size == 2
    assert v.index("anything") == OOV_INDEX


def test_vocabulary_round_trip():
    v = build_vocabulary(["red green green blue blue blue"], min_freq=1)
    for i in range(v.size):
        assert v.index(v.word(i)) == i


def test_vocabulary_frequency_order_matches_counting_oracle():
    rng = np.random.default_rng(2005)
    words = [f"w{i}" for i in range(30)]
    for _ in range(30):
        corpus = [" ".join(words[i] for i in rng.integers(0, 30, size=50))
                  for _ in range(4)]
        counts = Counter(t for line in corpus for t in line.split())
        v = build_vocabulary(corpus, min_freq=2)
        expected = sorted((w for w, c in counts.items() if c >= 2),
                          key=lambda w: (-counts[w], w))
        assert [v.word(i) for i in range(2, v.size)] == expected
        for w, c in counts.items():
            if c < 2:
                assert v.index(w) == OOV_INDEX


# ---------------------------------------------------------------------------
# item text


def test_item_text_appends_title_then_description():
    item = Item("x", 1, (5, 7), (9,))
    assert item_text(item) == (5, 7, 9)


def test_item_text_empty_maps_to_pad():
    assert item_text(Item("x", 1, (), ())) == (PAD_INDEX,)


def test_item_text_length_is_sum():
    rng = np.random.default_rng(2007)
    for _ in range(500):
        r, q = int(rng.integers(0, 6)), int(rng.integers(0, 12))
        title = tuple(int(i) for i in rng.integers(2, 50, size=r))
        desc = tuple(int(i) for i in rng.integers(2, 50, size=q))
        item = Item("x", 1, title, desc)
        expected = r + q if r + q else 1
        assert len(item_text(item)) == expected


# ---------------------------------------------------------------------------
# sessionize


def test_sessionize_single_session_with_buy():
    sessions = sessionize([click(0.0), click(5 * H, item="i2"), buy(6 * H)])
    assert len(sessions) == 1
    s = sessions[0]
    assert s.label == 1 and s.length == 2
    assert s.item_ids == ("i1", "i2")


def test_sessionize_window_boundary():
    sessions = sessionize([click(0.0), click(25 * H)])
    assert len(sessions) == 2
    assert all(s.label == 0 for s in sessions)
    # exactly 24h is still inside the window
    sessions = sessionize([click(0.0), click(24 * H)])
    assert len(sessions) == 1


def test_sessionize_day_from_first_click():
    sessions = sessionize([click(86400.0 * 3 + 100.0)])
    assert sessions[0].day == 3


def test_sessionize_unsorted_stream_rejected():
    with pytest.raises(DataError):
        sessionize([click(10.0), click(5.0)])


def test_sessionize_assignment_property():
    # every click lands in exactly one session and sessions span <= 24h
    rng = np.random.default_rng(2009)
    for _ in range(10_000):
        n = int(rng.integers(1, 12))
        users = [f"u{int(i)}" for i in rng.integers(0, 3, size=n)]
        times = np.sort(rng.uniform(0, 3 * 86400.0, size=n))
        events = [Event(float(t), u, f"i{int(rng.integers(0, 5))}", "click")
                  for t, u in zip(times, users)]
        sessions = sessionize(events)
        assert sum(s.length for s in sessions) == n
        seen = Counter()
        for s in sessions:
            span = s.clicks[-1].timestamp - s.clicks[0].timestamp
            assert span <= 86400.0
            assert list(s.clicks) == sorted(s.clicks, key=lambda c: c.timestamp)
            for c in s.clicks:
                seen[(c.user_id, c.timestamp, c.item_id)] += 1
        assert sum(seen.values()) == n


def test_sessionize_is_stable():
    rng = np.random.default_rng(2011)
    times = np.sort(rng.uniform(0, 5 * 86400.0, size=200))
    events = [Event(float(t), f"u{int(rng.integers(0, 8))}",
                    f"i{int(rng.integers(0, 20))}",
                    "buy" if rng.random() < 0.1 else "click") for t in times]
    assert sessionize(events) == sessionize(events)


# ---------------------------------------------------------------------------
# pad / prune


def test_pad_short_session():
    p = pad_or_prune(["a", "b", "c"])
    assert p.slots == (None,) * 7 + ("a", "b", "c")
    assert p.original_length == 3


def test_prune_long_session_keeps_most_recent():
    p = pad_or_prune([f"e{i}" for i in range(1, 13)])
    assert p.slots == tuple(f"e{i}" for i in range(3, 13))
    assert p.original_length == 10


def test_exact_length_is_fixed_point():
    ids = [f"x{i}" for i in range(10)]
    p = pad_or_prune(ids)
    assert p.slots == tuple(ids)


def test_pad_or_prune_length_always_max_len():
    for n in range(1, 51):
        p = pad_or_prune([f"i{k}" for k in range(n)])
        assert len(p.slots) == 10
        assert p.original_length == min(n, 10)
        # PAD prefix property: no real item before a PAD slot
        real_started = False
        for slot in p.slots:
            if slot is None:
                assert not real_started
            else:
                real_started = True


def test_prune_preserves_order():
    rng = np.random.default_rng(2013)
    for n in range(11, 51):
        ids = [f"i{int(k)}" for k in rng.permutation(n)]
        p = pad_or_prune(ids)
        assert list(p.slots) == ids[-10:]


# ---------------------------------------------------------------------------
# chronological split


def make_session(day, sid="s", user="u", label=0):
    from pisa.data import ClickEvent, Session
    ts = day * 86400.0 + 10.0
    return Session(sid, user, (ClickEvent("i1", ts, user),), label, day)


def test_split_basic():
    sessions = [make_session(d, sid=f"s{d}{i}") for d in (1, 2, 3) for i in range(2)]
    res = chronological_split(sessions, val_day=2, test_day=3)
    assert all(s.day == 1 for s in res.train)
    assert all(s.day == 2 for s in res.validation)
    assert all(s.day == 3 for s in res.test)
    assert not res.warnings


def test_split_empty_validation_warns():
    sessions = [make_session(1), make_session(3)]
    res = chronological_split(sessions, val_day=2, test_day=3)
    assert res.validation == ()
    assert any("validation" in w for w in res.warnings)


def test_split_partition_property():
    rng = np.random.default_rng(2015)
    for _ in range(50):
        days = rng.integers(0, 8, size=60)
        sessions = [make_session(int(d), sid=f"s{i}") for i, d in enumerate(days)]
        res = chronological_split(sessions, val_day=5, test_day=6)
        ids = lambda part: {s.session_id for s in part}
        assert not (ids(res.train) & ids(res.validation))
        assert not (ids(res.train) & ids(res.test))
        assert not (ids(res.validation) & ids(res.test))
        covered = ids(res.train) | ids(res.validation) | ids(res.test)
        assert covered == {s.session_id for s in sessions if s.day <= 6}


def test_split_rejects_bad_day_order():
    with pytest.raises(ValueError):
        chronological_split([], val_day=3, test_day=3)


# ---------------------------------------------------------------------------
# file formats


def test_catalog_file_round_trip(tmp_path):
    rows = [("i1", 2, "Blue Chair", "a sturdy blue chair"),
            ("i2", 1, "Lamp\twith tab", "line\nbreak here")]
    path = tmp_path / "catalog.tsv"
    save_catalog_file(path, rows)
    loaded = load_catalog_file(path)
    assert loaded[0] == rows[0]
    # escaping: tabs/newlines in text become spaces
    assert loaded[1] == ("i2", 1, "Lamp with tab", "line break here")


def test_events_file_round_trip(tmp_path):
    events = [Event(1000.5, "u1", "i1", "click"), Event(2000.25, "u1", "i1", "buy")]
    path = tmp_path / "events.tsv"
    save_events_file(path, events)
    assert load_events_file(path) == events


def test_events_file_rejects_bad_type(tmp_path):
    path = tmp_path / "events.tsv"
    path.write_text("100.0\tu1\ti1\tview\n")
    with pytest.raises(DataError):
        load_events_file(path)


def test_catalog_rejects_duplicate_ids():
    v = build_vocabulary(["chair"], 1)
    rows = [("i1", 1, "chair", ""), ("i1", 1, "chair", "")]
    with pytest.raises(DataError):
        build_catalog(rows, v, n_categories=2)


def test_catalog_rejects_bad_category():
    v = build_vocabulary(["chair"], 1)
    with pytest.raises(DataError):
        build_catalog([("i1", 5, "chair", "")], v, n_categories=2)


def test_build_catalog_encodes_tokens():
    v = build_vocabulary(["blue chair", "red lamp"], 1)
    cat = build_catalog([("i1", 1, "Blue Chair", "red unknownword")], v, 2)
    item = cat.get("i1")
    assert item.title_tokens == (v.index("blue"), v.index("chair"))
    assert item.description_tokens == (v.index("red"), OOV_INDEX)
