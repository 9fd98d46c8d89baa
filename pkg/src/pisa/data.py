"""Catalog and clickstream representation.

Covers tokenization, vocabulary construction, 24h sessionization, fixed
length-10 padding/pruning and the chronological train/validation/test
split, plus the tab-separated catalog and events file formats.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .errors import DataError

PAD_INDEX = 0
OOV_INDEX = 1
PAD_WORD = "<pad>"
OOV_WORD = "<oov>"

MAX_SESSION_LEN = 10
SESSION_WINDOW_SECONDS = 24.0 * 3600.0
SECONDS_PER_DAY = 86400.0

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric (ASCII) characters."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    """Word <-> index bijection with reserved PAD=0 and OOV=1 slots."""

    index_to_word: tuple[str, ...]
    word_to_index: dict[str, int] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.index_to_word)

    def index(self, word: str) -> int:
        return self.word_to_index.get(word, OOV_INDEX)

    def word(self, index: int) -> str:
        return self.index_to_word[index]

    def encode(self, tokens: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.word_to_index.get(t, OOV_INDEX) for t in tokens)


def build_vocabulary(texts: Iterable[str], min_freq: int = 1) -> Vocabulary:
    """Index words with corpus frequency >= min_freq, most frequent first.

    Ties break lexicographically; everything else resolves to OOV.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be at least 1")
    counts: Counter[str] = Counter()
    for text in texts:
        counts.update(tokenize(text))
    kept = sorted((w for w, c in counts.items() if c >= min_freq),
                  key=lambda w: (-counts[w], w))
    index_to_word = (PAD_WORD, OOV_WORD, *kept)
    # reserved names contain '<', which the tokenizer strips, so corpus
    # words can never collide with them
    word_to_index = {w: i for i, w in enumerate(index_to_word)}
    return Vocabulary(index_to_word, word_to_index)


@dataclass(frozen=True)
class Item:
    item_id: str
    category_id: int  # 1..K
    title_tokens: tuple[int, ...]
    description_tokens: tuple[int, ...]


def item_text(item: Item) -> tuple[int, ...]:
    """Title tokens followed by description tokens; [PAD] when both empty."""
    tokens = item.title_tokens + item.description_tokens
    return tokens if tokens else (PAD_INDEX,)


@dataclass
class Catalog:
    items: dict[str, Item]
    vocabulary: Vocabulary
    n_categories: int

    def __len__(self) -> int:
        return len(self.items)

    def get(self, item_id: str) -> Optional[Item]:
        return self.items.get(item_id)

    def sorted_items(self) -> list[Item]:
        return [self.items[k] for k in sorted(self.items)]


@dataclass(frozen=True)
class ClickEvent:
    item_id: str
    timestamp: float
    user_id: str


@dataclass(frozen=True)
class Event:
    """One line of the events file; event_type is 'click' or 'buy'."""

    timestamp: float
    user_id: str
    item_id: str
    event_type: str


@dataclass(frozen=True)
class Session:
    session_id: str
    user_id: str
    clicks: tuple[ClickEvent, ...]
    label: int
    day: int  # UTC day index of the first click

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(c.item_id for c in self.clicks)

    @property
    def length(self) -> int:
        return len(self.clicks)


@dataclass(frozen=True)
class PaddedSequence:
    """Exactly max_len slots; PAD slots (None) form a contiguous prefix."""

    slots: tuple[Optional[str], ...]
    original_length: int


def pad_or_prune(item_ids: Sequence[str], max_len: int = MAX_SESSION_LEN) -> PaddedSequence:
    """Prepend PAD slots to short sequences, keep the last max_len of long ones."""
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    ids = list(item_ids)
    if len(ids) >= max_len:
        kept = ids[len(ids) - max_len:]
        return PaddedSequence(tuple(kept), max_len)
    return PaddedSequence((None,) * (max_len - len(ids)) + tuple(ids), len(ids))


def sessionize(events: Sequence[Event],
               window: float = SESSION_WINDOW_SECONDS) -> list[Session]:
    """Group a time-sorted event stream into per-user 24h sessions.

    A new session opens when an event lands strictly after the current
    session's first timestamp plus the window. The label is 1 iff any buy
    event fell inside the window. Windows containing no click at all carry
    nothing to predict from and are dropped.
    """
    open_first: dict[str, float] = {}
    open_clicks: dict[str, list[ClickEvent]] = {}
    open_buy: dict[str, bool] = {}
    counter: Counter[str] = Counter()
    sessions: list[Session] = []

    def close(user: str) -> None:
        clicks = open_clicks[user]
        if clicks:
            sid = f"{user}:{counter[user]}"
            counter[user] += 1
            sessions.append(Session(
                session_id=sid,
                user_id=user,
                clicks=tuple(clicks),
                label=1 if open_buy[user] else 0,
                day=int(clicks[0].timestamp // SECONDS_PER_DAY),
            ))

    last_ts = -float("inf")
    for ev in events:
        if ev.timestamp < last_ts:
            raise DataError("event stream is not sorted by timestamp")
        last_ts = ev.timestamp
        user = ev.user_id
        if user in open_first and ev.timestamp > open_first[user] + window:
            close(user)
            del open_first[user]
        if user not in open_first:
            open_first[user] = ev.timestamp
            open_clicks[user] = []
            open_buy[user] = False
        if ev.event_type == "buy":
            open_buy[user] = True
        elif ev.event_type == "click":
            open_clicks[user].append(ClickEvent(ev.item_id, ev.timestamp, user))
        else:
            raise DataError(f"unknown event type {ev.event_type!r}")
    for user in sorted(open_first):
        close(user)
    sessions.sort(key=lambda s: (s.clicks[0].timestamp, s.user_id))
    return sessions


@dataclass(frozen=True)
class SplitResult:
    train: tuple[Session, ...]
    validation: tuple[Session, ...]
    test: tuple[Session, ...]
    warnings: tuple[str, ...]


def chronological_split(sessions: Sequence[Session], val_day: int,
                        test_day: int) -> SplitResult:
    """Train = days before val_day, validation = val_day, test = test_day.

    Days after test_day (and any between val_day and test_day) are
    discarded; with the usual adjacent val/test days the three parts
    partition everything up to test_day.
    """
    if not val_day < test_day:
        raise ValueError("val_day must precede test_day")
    train = tuple(s for s in sessions if s.day < val_day)
    val = tuple(s for s in sessions if s.day == val_day)
    test = tuple(s for s in sessions if s.day == test_day)
    warnings = tuple(f"empty {name} partition (day {day})"
                     for name, day, part in (("train", val_day - 1, train),
                                             ("validation", val_day, val),
                                             ("test", test_day, test))
                     if not part)
    return SplitResult(train, val, test, warnings)


# ---------------------------------------------------------------------------
# file formats: tab-separated, UTF-8, one record per line


def _clean_field(text: str) -> str:
    return text.replace("\t", " ").replace("\n", " ").replace("\r", " ")


def save_catalog_file(path, rows: Iterable[tuple[str, int, str, str]]) -> None:
    """Rows of (item_id, category_id, title, description)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item_id, category_id, title, description in rows:
            fh.write(f"{_clean_field(item_id)}\t{int(category_id)}\t"
                     f"{_clean_field(title)}\t{_clean_field(description)}\n")


def load_catalog_file(path) -> list[tuple[str, int, str, str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 tab-separated "
                                f"fields, got {len(parts)}")
            item_id, category_id, title, description = parts
            try:
                cat = int(category_id)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad category id "
                                f"{category_id!r}") from exc
            rows.append((item_id, cat, title, description))
    return rows


def build_catalog(rows: Sequence[tuple[str, int, str, str]],
                  vocabulary: Vocabulary, n_categories: int) -> Catalog:
    items: dict[str, Item] = {}
    for item_id, category_id, title, description in rows:
        if item_id in items:
            raise DataError(f"duplicate item id {item_id!r}")
        if not 1 <= category_id <= n_categories:
            raise DataError(f"item {item_id!r}: category {category_id} outside "
                            f"1..{n_categories}")
        items[item_id] = Item(
            item_id=item_id,
            category_id=category_id,
            title_tokens=vocabulary.encode(tokenize(title)),
            description_tokens=vocabulary.encode(tokenize(description)),
        )
    return Catalog(items=items, vocabulary=vocabulary, n_categories=n_categories)


def save_events_file(path, events: Iterable[Event]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ev in events:
            fh.write(f"{ev.timestamp!r}\t{_clean_field(ev.user_id)}\t"
                     f"{_clean_field(ev.item_id)}\t{ev.event_type}\n")


def load_events_file(path) -> list[Event]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 tab-separated "
                                f"fields, got {len(parts)}")
            ts, user_id, item_id, event_type = parts
            try:
                timestamp = float(ts)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad timestamp {ts!r}") from exc
            if event_type not in ("click", "buy"):
                raise DataError(f"{path}:{lineno}: bad event type {event_type!r}")
            events.append(Event(timestamp, user_id, item_id, event_type))
    return events
