"""The three session predictors and the two-phase embedding protocol.

Phase one trains a word-lookup -> GRU -> dense network to predict an
item's category from its text; the softmax head is then detached and the
dense output becomes the item's frozen vector. Phase two trains an LSTM
purchase-intent predictor over length-10 padded sessions:

- content: frozen text vectors only (works on never-seen items),
- baseline: item-ID embeddings only (blind to text),
- integrated: both branches, concatenated content-first into a merge layer,
  with the user-ID embedding prepended as the ID branch's first timestep.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .data import (Catalog, Item, PAD_INDEX, PaddedSequence, Session,
                   item_text, pad_or_prune)
from .errors import ConfigError, DataError, MetricError
from .metrics import auc
from .nn import (AdamConfig, Dense, Embedding, Gru, Lstm, ParamTensor,
                 adam_step, sigmoid, sigmoid_bce, softmax_cross_entropy_batch)
from .serialize import (load_model_document, matrix_from_lists,
                        matrix_to_lists, save_model_document)

PAD_ROW = 0
UNKNOWN_ROW = 1

PREDICTOR_KINDS = ("content", "integrated", "baseline")


@dataclass(frozen=True)
class Dims:
    word_dim: int = 64
    gru_hidden: int = 100
    embed_dim: int = 50
    id_dim: int = 64
    merge_dim: int = 100
    lstm_hidden: int = 150


@dataclass
class TrainConfig:
    max_epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 0.001
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ConfigError("max_epochs and batch_size must be positive")


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))


def _params_doc(params: Sequence[ParamTensor]) -> dict:
    return {p.name: matrix_to_lists(p.value) for p in params}


def _load_params(params: Sequence[ParamTensor], doc: dict) -> None:
    names = {p.name for p in params}
    if set(doc) != names:
        raise DataError("parameter names in file do not match the model")
    for p in params:
        p.value[...] = matrix_from_lists(doc[p.name], p.value.shape)


# ---------------------------------------------------------------------------
# phase one: the embedding component


class EmbeddingComponent:
    """Word lookup -> GRU -> tanh dense, with a detachable category head."""

    kind = "embedding_component"

    def __init__(self, vocab_size: int, n_categories: int,
                 dims: Dims = Dims(), seed: int = 0):
        if n_categories < 2:
            raise ConfigError("need at least 2 categories to train against")
        self.vocab_size = vocab_size
        self.n_categories = n_categories
        self.dims = dims
        self.word_emb = Embedding(vocab_size, dims.word_dim,
                                  rng=_rng(seed, 0), name="word_emb")
        self.gru = Gru(dims.word_dim, dims.gru_hidden,
                       rng=_rng(seed, 1), name="gru")
        self.dense1 = Dense(dims.gru_hidden, dims.embed_dim, "tanh",
                            rng=_rng(seed, 2), name="dense1")
        self.head = Dense(dims.embed_dim, n_categories, "identity",
                          rng=_rng(seed, 3), name="head")
        self.frozen = False
        self.head_detached = False
        self._token_cache: Optional[np.ndarray] = None

    def params(self) -> list[ParamTensor]:
        return (self.word_emb.params() + self.gru.params()
                + self.dense1.params() + self.head.params())

    def forward_logits(self, token_rows: np.ndarray) -> np.ndarray:
        """Category logits for a (B, T) matrix of token ids."""
        B, T = token_rows.shape
        vecs = self.word_emb.lookup(token_rows.reshape(-1))
        h = self.gru.forward_sequence(vecs.reshape(B, T, self.dims.word_dim))
        logits = self.head.forward(self.dense1.forward(h))
        self._token_cache = token_rows
        return logits

    def backward_from_logits(self, dlogits: np.ndarray) -> None:
        if self._token_cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        token_rows = self._token_cache
        self._token_cache = None
        dh = self.dense1.backward(self.head.backward(dlogits))
        dX = self.gru.backward_sequence(dh)
        self.word_emb.accumulate_grad(token_rows.reshape(-1),
                                      dX.reshape(-1, self.dims.word_dim))

    def embed_tokens(self, tokens: Sequence[int]) -> np.ndarray:
        """Item vector for a token sequence; requires the frozen component."""
        if not self.frozen:
            raise RuntimeError("component must be frozen before embedding items")
        vecs = self.word_emb.lookup(np.asarray(tokens, dtype=np.int64))
        h = self.gru.forward_sequence(vecs[None, :, :])
        return self.dense1.forward(h)[0].copy()

    def freeze(self) -> None:
        self.frozen = True
        self.head_detached = True

    def to_document(self) -> dict:
        return {"vocab_size": self.vocab_size,
                "n_categories": self.n_categories,
                "head_detached": self.head_detached,
                "params": _params_doc(self.params())}

    @classmethod
    def from_document(cls, doc: dict) -> "EmbeddingComponent":
        dims = Dims(**doc["dims"])
        comp = cls(doc["vocab_size"], doc["n_categories"], dims, seed=0)
        _load_params(comp.params(), doc["params"])
        comp.frozen = True
        comp.head_detached = bool(doc.get("head_detached", True))
        return comp


def _length_batches(indices: np.ndarray, lengths: np.ndarray, batch_size: int,
                    rng: np.random.Generator) -> list[np.ndarray]:
    """Batches of equal-length texts, in shuffled deterministic order."""
    by_len: dict[int, list[int]] = {}
    for i in indices:
        by_len.setdefault(int(lengths[i]), []).append(int(i))
    batches = []
    for length in sorted(by_len):
        group = by_len[length]
        for a in range(0, len(group), batch_size):
            batches.append(np.array(group[a:a + batch_size]))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def train_embedding_component(catalog: Catalog, dims: Dims = Dims(),
                              cfg: TrainConfig = TrainConfig()
                              ) -> tuple[EmbeddingComponent, list[dict]]:
    """Train text -> category, keep the best validation-accuracy epoch,
    then freeze and detach the head.

    A seeded 10% item split provides the validation accuracy; with fewer
    than ten items the training loss picks the snapshot instead.
    """
    items = catalog.sorted_items()
    if not items:
        raise DataError("cannot train the embedding component on an empty catalog")
    if catalog.n_categories < 2:
        raise ConfigError("need at least 2 categories")
    texts = [np.asarray(item_text(it), dtype=np.int64) for it in items]
    lengths = np.array([len(t) for t in texts])
    labels = np.array([it.category_id - 1 for it in items], dtype=np.int64)

    comp = EmbeddingComponent(catalog.vocabulary.size, catalog.n_categories,
                              dims, seed=cfg.seed)
    data_rng = _rng(cfg.seed, 100)
    perm = data_rng.permutation(len(items))
    n_val = len(items) // 10
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    adam = AdamConfig(alpha=cfg.learning_rate)
    trace: list[dict] = []
    best: tuple[float, list[np.ndarray]] | None = None

    def accuracy(idx: np.ndarray) -> float:
        hits = 0
        for batch in _length_batches(idx, lengths, 512, _rng(cfg.seed, 101)):
            rows = np.stack([texts[i] for i in batch])
            logits = comp.forward_logits(rows)
            comp._token_cache = None
            hits += int((logits.argmax(axis=1) == labels[batch]).sum())
        return hits / len(idx)

    for epoch in range(1, cfg.max_epochs + 1):
        loss_sum = 0.0
        for batch in _length_batches(train_idx, lengths, cfg.batch_size, data_rng):
            rows = np.stack([texts[i] for i in batch])
            logits = comp.forward_logits(rows)
            losses, _, grad = softmax_cross_entropy_batch(logits, labels[batch])
            loss_sum += float(losses.sum())
            comp.backward_from_logits(grad / len(batch))
            adam_step(comp.params(), adam)
        train_loss = loss_sum / len(train_idx)
        val_acc = accuracy(val_idx) if n_val else None
        score = val_acc if val_acc is not None else -train_loss
        trace.append({"epoch": epoch, "train_loss": train_loss,
                      "val_accuracy": val_acc})
        if best is None or score > best[0]:
            best = (score, [p.value.copy() for p in comp.params()])
    for p, v in zip(comp.params(), best[1]):
        p.value[...] = v
    comp.freeze()
    return comp, trace


def embed_item(component: EmbeddingComponent, item: Item) -> np.ndarray:
    """Deterministic text-only item vector; never looks at the item id."""
    return component.embed_tokens(item_text(item))


class ItemEmbeddingTable:
    """Frozen vectors for every catalog item, plus on-demand embedding for
    ids outside the catalog (their text is unknown, so the empty-text rule
    applies) and an all-zero PAD vector."""

    def __init__(self, component: EmbeddingComponent, catalog: Catalog):
        if not component.frozen:
            raise RuntimeError("table requires a frozen component")
        self.component = component
        self.catalog = catalog
        self.dim = component.dims.embed_dim
        self.pad_vector = np.zeros(self.dim)
        self._vectors = {it.item_id: embed_item(component, it)
                         for it in catalog.sorted_items()}

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._vectors

    def vector(self, item_id: str) -> np.ndarray:
        v = self._vectors.get(item_id)
        if v is None:
            item = self.catalog.get(item_id)
            tokens = item_text(item) if item is not None else (PAD_INDEX,)
            v = self.component.embed_tokens(tokens)
            self._vectors[item_id] = v
        return v


def build_embedding_table(component: EmbeddingComponent,
                          catalog: Catalog) -> ItemEmbeddingTable:
    return ItemEmbeddingTable(component, catalog)


# ---------------------------------------------------------------------------
# phase two: session predictors


def _id_rows(ids: Sequence[str]) -> dict[str, int]:
    return {v: i + 2 for i, v in enumerate(sorted(set(ids)))}


def _content_matrix(padded: Sequence[PaddedSequence],
                    table: ItemEmbeddingTable, dim: int) -> np.ndarray:
    """(N, max_len, dim) item vectors; PAD slots stay all-zero."""
    X = np.zeros((len(padded), len(padded[0].slots), dim))
    for i, seq in enumerate(padded):
        for t, slot in enumerate(seq.slots):
            if slot is not None:
                X[i, t, :] = table.vector(slot)
    return X


def _row_matrix(padded: Sequence[PaddedSequence],
                item_rows: dict[str, int]) -> np.ndarray:
    rows = np.zeros((len(padded), len(padded[0].slots)), dtype=np.int64)
    for i, seq in enumerate(padded):
        for t, slot in enumerate(seq.slots):
            rows[i, t] = (PAD_ROW if slot is None
                          else item_rows.get(slot, UNKNOWN_ROW))
    return rows


class ContentPredictor:
    kind = "content"

    def __init__(self, dims: Dims = Dims(), seed: int = 0):
        self.dims = dims
        self.lstm = Lstm(dims.embed_dim, dims.lstm_hidden,
                         rng=_rng(seed, 10), name="content_lstm")
        self.out = Dense(dims.lstm_hidden, 1, rng=_rng(seed, 11), name="out")

    def params(self) -> list[ParamTensor]:
        return self.lstm.params() + self.out.params()

    def encode(self, padded: Sequence[PaddedSequence],
               user_ids: Sequence[str], table: ItemEmbeddingTable) -> tuple:
        return (_content_matrix(padded, table, self.dims.embed_dim),)

    def forward_logits(self, inputs: tuple) -> np.ndarray:
        (X,) = inputs
        return self.out.forward(self.lstm.forward_sequence(X))[:, 0]

    def backward(self, dlogits: np.ndarray) -> None:
        self.lstm.backward_sequence(self.out.backward(dlogits[:, None]))

    def to_document(self) -> dict:
        return {"params": _params_doc(self.params())}

    @classmethod
    def from_document(cls, doc: dict) -> "ContentPredictor":
        model = cls(Dims(**doc["dims"]), seed=0)
        _load_params(model.params(), doc["params"])
        return model


class BaselinePredictor:
    """Item-ID embeddings only; reserved rows 0 (PAD) and 1 (unknown)."""

    kind = "baseline"

    def __init__(self, item_ids: Sequence[str], dims: Dims = Dims(), seed: int = 0):
        self.dims = dims
        self.item_rows = _id_rows(item_ids)
        self.item_emb = Embedding(len(self.item_rows) + 2, dims.id_dim,
                                  rng=_rng(seed, 20), name="item_emb")
        self.lstm = Lstm(dims.id_dim, dims.lstm_hidden,
                         rng=_rng(seed, 21), name="id_lstm")
        self.out = Dense(dims.lstm_hidden, 1, rng=_rng(seed, 22), name="out")
        self._rows_cache: Optional[np.ndarray] = None

    def params(self) -> list[ParamTensor]:
        return self.item_emb.params() + self.lstm.params() + self.out.params()

    def encode(self, padded, user_ids, table=None) -> tuple:
        return (_row_matrix(padded, self.item_rows),)

    def forward_logits(self, inputs: tuple) -> np.ndarray:
        (rows,) = inputs
        B, T = rows.shape
        X = self.item_emb.lookup(rows.reshape(-1)).reshape(B, T, self.dims.id_dim)
        self._rows_cache = rows
        return self.out.forward(self.lstm.forward_sequence(X))[:, 0]

    def backward(self, dlogits: np.ndarray) -> None:
        rows = self._rows_cache
        self._rows_cache = None
        dX = self.lstm.backward_sequence(self.out.backward(dlogits[:, None]))
        self.item_emb.accumulate_grad(rows.reshape(-1),
                                      dX.reshape(-1, self.dims.id_dim))

    def to_document(self) -> dict:
        return {"item_ids": sorted(self.item_rows),
                "params": _params_doc(self.params())}

    @classmethod
    def from_document(cls, doc: dict) -> "BaselinePredictor":
        model = cls(doc["item_ids"], Dims(**doc["dims"]), seed=0)
        _load_params(model.params(), doc["params"])
        return model


class IntegratedPredictor:
    """Content LSTM branch plus an item/user-ID LSTM branch.

    The final hidden states are concatenated content-first and fed through
    a tanh merge layer; the user embedding is timestep 0 of the ID branch.
    """

    kind = "integrated"
    branch_order = ("content", "id")

    def __init__(self, item_ids: Sequence[str], user_ids: Sequence[str],
                 dims: Dims = Dims(), seed: int = 0):
        self.dims = dims
        self.item_rows = _id_rows(item_ids)
        self.user_rows = _id_rows(user_ids)
        self.content_lstm = Lstm(dims.embed_dim, dims.lstm_hidden,
                                 rng=_rng(seed, 30), name="content_lstm")
        self.item_emb = Embedding(len(self.item_rows) + 2, dims.id_dim,
                                  rng=_rng(seed, 31), name="item_emb")
        self.user_emb = Embedding(len(self.user_rows) + 2, dims.id_dim,
                                  rng=_rng(seed, 32), name="user_emb")
        self.id_lstm = Lstm(dims.id_dim, dims.lstm_hidden,
                            rng=_rng(seed, 33), name="id_lstm")
        self.merge = Dense(2 * dims.lstm_hidden, dims.merge_dim, "tanh",
                           rng=_rng(seed, 34), name="merge")
        self.out = Dense(dims.merge_dim, 1, rng=_rng(seed, 35), name="out")
        self._cache: Optional[tuple] = None

    def params(self) -> list[ParamTensor]:
        return (self.content_lstm.params() + self.item_emb.params()
                + self.user_emb.params() + self.id_lstm.params()
                + self.merge.params() + self.out.params())

    def encode(self, padded, user_ids, table: ItemEmbeddingTable) -> tuple:
        content = _content_matrix(padded, table, self.dims.embed_dim)
        rows = _row_matrix(padded, self.item_rows)
        users = np.array([self.user_rows.get(u, UNKNOWN_ROW) for u in user_ids],
                         dtype=np.int64)
        return (content, rows, users)

    def forward_logits(self, inputs: tuple) -> np.ndarray:
        X, rows, users = inputs
        B, T = rows.shape
        hc = self.content_lstm.forward_sequence(X)
        id_vecs = self.item_emb.lookup(rows.reshape(-1)).reshape(B, T, self.dims.id_dim)
        user_vecs = self.user_emb.lookup(users)[:, None, :]
        seq = np.concatenate([user_vecs, id_vecs], axis=1)
        hi = self.id_lstm.forward_sequence(seq)
        merged = self.merge.forward(np.concatenate([hc, hi], axis=1))
        self._cache = (rows, users)
        return self.out.forward(merged)[:, 0]

    def backward(self, dlogits: np.ndarray) -> None:
        rows, users = self._cache
        self._cache = None
        H = self.dims.lstm_hidden
        dmerged = self.merge.backward(self.out.backward(dlogits[:, None]))
        dseq = self.id_lstm.backward_sequence(dmerged[:, H:])
        self.user_emb.accumulate_grad(users, dseq[:, 0, :])
        self.item_emb.accumulate_grad(rows.reshape(-1),
                                      dseq[:, 1:, :].reshape(-1, self.dims.id_dim))
        self.content_lstm.backward_sequence(dmerged[:, :H])

    def to_document(self) -> dict:
        return {"branch_order": list(self.branch_order),
                "item_ids": sorted(self.item_rows),
                "user_ids": sorted(self.user_rows),
                "params": _params_doc(self.params())}

    @classmethod
    def from_document(cls, doc: dict) -> "IntegratedPredictor":
        if tuple(doc.get("branch_order", ())) != cls.branch_order:
            raise DataError("integrated model file has an unexpected branch order")
        model = cls(doc["item_ids"], doc["user_ids"], Dims(**doc["dims"]), seed=0)
        _load_params(model.params(), doc["params"])
        return model


Predictor = ContentPredictor | BaselinePredictor | IntegratedPredictor


def build_predictor(kind: str, train_sessions: Sequence[Session],
                    dims: Dims = Dims(), seed: int = 0) -> Predictor:
    item_ids = sorted({i for s in train_sessions for i in s.item_ids})
    if kind == "content":
        return ContentPredictor(dims, seed)
    if kind == "baseline":
        return BaselinePredictor(item_ids, dims, seed)
    if kind == "integrated":
        user_ids = sorted({s.user_id for s in train_sessions})
        return IntegratedPredictor(item_ids, user_ids, dims, seed)
    raise ConfigError(f"unknown predictor kind {kind!r}")


# ---------------------------------------------------------------------------
# prediction and training


def _take(inputs: tuple, idx: np.ndarray) -> tuple:
    return tuple(a[idx] for a in inputs)


def predict_session(model: Predictor, padded: PaddedSequence,
                    table: Optional[ItemEmbeddingTable] = None,
                    user_id: str = "") -> float:
    """Purchase probability in (0, 1) for one padded session."""
    inputs = model.encode([padded], [user_id], table)
    logit = model.forward_logits(inputs)[0]
    _clear_caches(model)
    return float(sigmoid(np.asarray(logit)))


def score_sessions(model: Predictor, sessions: Sequence[Session],
                   table: Optional[ItemEmbeddingTable] = None,
                   batch_size: int = 2048) -> np.ndarray:
    """Vector of purchase probabilities, aligned with the session list."""
    padded = [pad_or_prune(s.item_ids) for s in sessions]
    users = [s.user_id for s in sessions]
    inputs = model.encode(padded, users, table)
    out = np.empty(len(sessions))
    for a in range(0, len(sessions), batch_size):
        idx = np.arange(a, min(a + batch_size, len(sessions)))
        out[idx] = sigmoid(model.forward_logits(_take(inputs, idx)))
    _clear_caches(model)
    return out


def _clear_caches(model) -> None:
    for attr in ("lstm", "content_lstm", "id_lstm", "out", "merge"):
        layer = getattr(model, attr, None)
        if layer is not None:
            layer._cache = None
    for attr in ("_rows_cache", "_cache"):
        if hasattr(model, attr):
            setattr(model, attr, None)


def train_predictor(kind: str, train_sessions: Sequence[Session],
                    val_sessions: Sequence[Session],
                    table: Optional[ItemEmbeddingTable],
                    cfg: TrainConfig = TrainConfig(), dims: Dims = Dims()
                    ) -> tuple[Predictor, list[dict]]:
    """Minimize BCE over shuffled mini-batches; return the snapshot of the
    epoch with the best validation AUC, plus the per-epoch trace."""
    if not train_sessions:
        raise DataError("training set is empty")
    val_labels = np.array([s.label for s in val_sessions], dtype=np.int64)
    if len(set(val_labels.tolist())) < 2:
        raise MetricError("validation set needs both classes for AUC selection")

    model = build_predictor(kind, train_sessions, dims, seed=cfg.seed)
    train_padded = [pad_or_prune(s.item_ids) for s in train_sessions]
    train_inputs = model.encode(train_padded,
                                [s.user_id for s in train_sessions], table)
    y = np.array([s.label for s in train_sessions], dtype=np.float64)
    val_padded = [pad_or_prune(s.item_ids) for s in val_sessions]
    val_inputs = model.encode(val_padded,
                              [s.user_id for s in val_sessions], table)

    adam = AdamConfig(alpha=cfg.learning_rate)
    shuffle_rng = _rng(cfg.seed, 200)
    n = len(train_sessions)
    trace: list[dict] = []
    best: tuple[float, list[np.ndarray]] | None = None
    for epoch in range(1, cfg.max_epochs + 1):
        perm = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for a in range(0, n, cfg.batch_size):
            idx = perm[a:a + cfg.batch_size]
            logits = model.forward_logits(_take(train_inputs, idx))
            losses, _, grad = sigmoid_bce(logits, y[idx])
            loss_sum += float(np.sum(losses))
            model.backward(grad / len(idx))
            adam_step(model.params(), adam)
        val_scores = np.empty(len(val_sessions))
        for a in range(0, len(val_sessions), 4096):
            idx = np.arange(a, min(a + 4096, len(val_sessions)))
            val_scores[idx] = model.forward_logits(_take(val_inputs, idx))
        _clear_caches(model)
        val_auc = auc(val_scores, val_labels)
        trace.append({"epoch": epoch, "train_loss": loss_sum / n,
                      "val_auc": val_auc})
        if best is None or val_auc > best[0]:
            best = (val_auc, [p.value.copy() for p in model.params()])
    for p, v in zip(model.params(), best[1]):
        p.value[...] = v
    return model, trace


# ---------------------------------------------------------------------------
# persistence


def save_model(path, model) -> None:
    save_model_document(path, model.kind, asdict(model.dims), model.to_document())


_KIND_TO_CLASS = {"embedding_component": EmbeddingComponent,
                  "content": ContentPredictor,
                  "baseline": BaselinePredictor,
                  "integrated": IntegratedPredictor}


def load_model(path, expected_kind: Optional[str] = None):
    doc = load_model_document(path, expected_kind)
    return _KIND_TO_CLASS[doc["model_kind"]].from_document(doc)
