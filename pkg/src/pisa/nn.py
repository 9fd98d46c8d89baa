"""Minimal deterministic neural-network kernel.

Everything is float64 and seeded: parameter storage with Adam state,
forward/backward passes for dense, GRU, LSTM and embedding-lookup layers,
numerically stable softmax/sigmoid losses, and a central finite-difference
gradient checker. There is no autodiff graph; each layer caches its last
forward pass and `backward_*` consumes that cache.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError

FLOAT = np.float64


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """n independent generators split from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...] | None = None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out)).astype(FLOAT)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # piecewise form never exponentiates a large positive argument
    x = np.asarray(x, dtype=FLOAT)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class ParamTensor:
    """A trainable array bundled with its gradient and Adam moments.

    All four arrays share one shape; moments start at zero.
    """

    __slots__ = ("name", "value", "grad", "adam_m", "adam_v")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.array(value, dtype=FLOAT)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:  # pragma: no cover
        return f"ParamTensor({self.name!r}, shape={self.value.shape})"


@dataclass
class AdamConfig:
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.t < 0:
            raise ValueError("step count must be non-negative")


def adam_step(params: Iterable[ParamTensor], cfg: AdamConfig) -> None:
    """One Adam update with bias correction; zeroes grads and bumps cfg.t."""
    params = list(params)
    for p in params:
        if not np.isfinite(p.grad).all():
            raise NumericError(f"non-finite gradient in parameter {p.name!r}")
    t = cfg.t + 1
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for p in params:
        p.adam_m *= cfg.beta1
        p.adam_m += (1.0 - cfg.beta1) * p.grad
        p.adam_v *= cfg.beta2
        p.adam_v += (1.0 - cfg.beta2) * np.square(p.grad)
        p.value -= cfg.alpha * (p.adam_m / c1) / (np.sqrt(p.adam_v / c2) + cfg.epsilon)
        p.zero_grad()
    cfg.t = t


# ---------------------------------------------------------------------------
# layers


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=FLOAT)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


class Dense:
    """Fully connected layer y = act(x W + b), act in {identity, tanh, sigmoid}."""

    ACTIVATIONS = ("identity", "tanh", "sigmoid")

    def __init__(self, in_dim: int, out_dim: int, activation: str = "identity", *,
                 rng: np.random.Generator, name: str = "dense"):
        if activation not in self.ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.W = ParamTensor(f"{name}.W", glorot_uniform(rng, in_dim, out_dim))
        self.b = ParamTensor(f"{name}.b", np.zeros(out_dim))
        self._cache: tuple[np.ndarray, np.ndarray, bool] | None = None

    def params(self) -> list[ParamTensor]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        xb, squeeze = _as_batch(x)
        if xb.shape[-1] != self.in_dim:
            raise ValueError(f"expected input dim {self.in_dim}, got {xb.shape[-1]}")
        y = xb @ self.W.value + self.b.value
        if self.activation == "tanh":
            y = np.tanh(y)
        elif self.activation == "sigmoid":
            y = sigmoid(y)
        self._cache = (xb, y, squeeze)
        return y[0] if squeeze else y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        xb, y, squeeze = self._cache
        self._cache = None
        dy = np.asarray(dy, dtype=FLOAT)
        if squeeze:
            dy = dy[None, :]
        if self.activation == "tanh":
            dpre = dy * (1.0 - y * y)
        elif self.activation == "sigmoid":
            dpre = dy * y * (1.0 - y)
        else:
            dpre = dy
        self.W.grad += xb.T @ dpre
        self.b.grad += dpre.sum(axis=0)
        dx = dpre @ self.W.value.T
        return dx[0] if squeeze else dx


class Embedding:
    """Row-lookup table; the backward pass touches only the rows that were read."""

    def __init__(self, n_rows: int, dim: int, *, rng: np.random.Generator,
                 name: str = "embedding"):
        self.n_rows = n_rows
        self.dim = dim
        self.E = ParamTensor(f"{name}.E", glorot_uniform(rng, n_rows, dim))

    def params(self) -> list[ParamTensor]:
        return [self.E]

    def _check(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_rows):
            raise IndexError(f"token id out of range [0, {self.n_rows})")
        return ids

    def lookup(self, ids) -> np.ndarray:
        """Rows of E for integer id(s); scalar id gives a single row."""
        if np.isscalar(ids) or getattr(ids, "ndim", 1) == 0:
            return self.E.value[self._check(np.asarray([ids]))[0]]
        return self.E.value[self._check(ids)]

    def accumulate_grad(self, ids, dout: np.ndarray) -> None:
        ids = self._check(np.atleast_1d(np.asarray(ids)))
        np.add.at(self.E.grad, ids, np.asarray(dout, dtype=FLOAT).reshape(ids.shape + (self.dim,)))


class Gru:
    """Gated recurrent unit.

    z = sigma(x W_z + h U_z + b_z),  r = sigma(x W_r + h U_r + b_r),
    hcand = tanh(x W_h + (r*h) U_h + b_h),  h' = (1-z)*h + z*hcand.

    Gate matmuls for z and r are fused into one GEMM per step; the per-gate
    parameter tensors stay separate for optimization and serialization.
    """

    def __init__(self, input_dim: int, hidden_size: int, *,
                 rng: np.random.Generator, name: str = "gru"):
        self.input_dim = input_dim
        self.hidden_size = hidden_size
        h = hidden_size
        self.W_z = ParamTensor(f"{name}.W_z", glorot_uniform(rng, input_dim, h))
        self.W_r = ParamTensor(f"{name}.W_r", glorot_uniform(rng, input_dim, h))
        self.W_h = ParamTensor(f"{name}.W_h", glorot_uniform(rng, input_dim, h))
        self.U_z = ParamTensor(f"{name}.U_z", glorot_uniform(rng, h, h))
        self.U_r = ParamTensor(f"{name}.U_r", glorot_uniform(rng, h, h))
        self.U_h = ParamTensor(f"{name}.U_h", glorot_uniform(rng, h, h))
        self.b_z = ParamTensor(f"{name}.b_z", np.zeros(h))
        self.b_r = ParamTensor(f"{name}.b_r", np.zeros(h))
        self.b_h = ParamTensor(f"{name}.b_h", np.zeros(h))
        self._cache = None

    def params(self) -> list[ParamTensor]:
        return [self.W_z, self.W_r, self.W_h, self.U_z, self.U_r, self.U_h,
                self.b_z, self.b_r, self.b_h]

    def forward_sequence(self, X: np.ndarray, h0: np.ndarray | None = None) -> np.ndarray:
        """Run T steps over X of shape (B, T, input_dim); returns final h (B, H)."""
        X = np.asarray(X, dtype=FLOAT)
        B, T, d = X.shape
        if d != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {d}")
        H = self.hidden_size
        Wzr = np.hstack([self.W_z.value, self.W_r.value])
        Uzr = np.hstack([self.U_z.value, self.U_r.value])
        bzr = np.concatenate([self.b_z.value, self.b_r.value])
        h = np.zeros((B, H), dtype=FLOAT) if h0 is None else np.array(h0, dtype=FLOAT)
        steps = []
        for t in range(T):
            x = X[:, t, :]
            zr = sigmoid(x @ Wzr + h @ Uzr + bzr)
            z, r = zr[:, :H], zr[:, H:]
            rh = r * h
            hcand = np.tanh(x @ self.W_h.value + rh @ self.U_h.value + self.b_h.value)
            h_new = (1.0 - z) * h + z * hcand
            steps.append((x, h, z, r, rh, hcand))
            h = h_new
        self._cache = (steps, Wzr, Uzr, X.shape)
        return h

    def backward_sequence(self, dh_last: np.ndarray) -> np.ndarray:
        """Backprop through the cached forward pass; accumulates parameter grads.

        Returns gradients w.r.t. the inputs, shape (B, T, input_dim).
        """
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        steps, Wzr, Uzr, x_shape = self._cache
        self._cache = None
        B, T, d = x_shape
        H = self.hidden_size
        dX = np.zeros(x_shape, dtype=FLOAT)
        dWzr = np.zeros_like(Wzr)
        dUzr = np.zeros_like(Uzr)
        dbzr = np.zeros(2 * H, dtype=FLOAT)
        dWh = np.zeros_like(self.W_h.value)
        dUh = np.zeros_like(self.U_h.value)
        dbh = np.zeros(H, dtype=FLOAT)
        dh = np.asarray(dh_last, dtype=FLOAT).copy()
        for t in range(T - 1, -1, -1):
            x, h_prev, z, r, rh, hcand = steps[t]
            dz = dh * (hcand - h_prev)
            dhcand = dh * z
            dh_prev = dh * (1.0 - z)
            da_h = dhcand * (1.0 - hcand * hcand)
            dWh += x.T @ da_h
            dUh += rh.T @ da_h
            dbh += da_h.sum(axis=0)
            drh = da_h @ self.U_h.value.T
            dr = drh * h_prev
            dh_prev += drh * r
            dx = da_h @ self.W_h.value.T
            da_zr = np.hstack([dz * z * (1.0 - z), dr * r * (1.0 - r)])
            dWzr += x.T @ da_zr
            dUzr += h_prev.T @ da_zr
            dbzr += da_zr.sum(axis=0)
            dx += da_zr @ Wzr.T
            dh_prev += da_zr @ Uzr.T
            dX[:, t, :] = dx
            dh = dh_prev
        self.W_z.grad += dWzr[:, :H]
        self.W_r.grad += dWzr[:, H:]
        self.U_z.grad += dUzr[:, :H]
        self.U_r.grad += dUzr[:, H:]
        self.b_z.grad += dbzr[:H]
        self.b_r.grad += dbzr[H:]
        self.W_h.grad += dWh
        self.U_h.grad += dUh
        self.b_h.grad += dbh
        return dX

    def step(self, x_t: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
        """Single recurrence step on vectors (input_dim,) and (H,)."""
        h = self.forward_sequence(np.asarray(x_t, dtype=FLOAT)[None, None, :],
                                  h0=np.asarray(h_prev, dtype=FLOAT)[None, :])
        return h[0]


class Lstm:
    """Standard i/f/o/g cell without peepholes; forget-gate bias starts at 1.

    c' = f*c + i*g,  h' = o*tanh(c'), with sigmoid gates i, f, o and tanh
    candidate g. All four gate GEMMs are fused per step.
    """

    GATES = ("i", "f", "o", "g")

    def __init__(self, input_dim: int, hidden_size: int, *,
                 rng: np.random.Generator, name: str = "lstm"):
        self.input_dim = input_dim
        self.hidden_size = hidden_size
        h = hidden_size
        self.W = {k: ParamTensor(f"{name}.W_{k}", glorot_uniform(rng, input_dim, h))
                  for k in self.GATES}
        self.U = {k: ParamTensor(f"{name}.U_{k}", glorot_uniform(rng, h, h))
                  for k in self.GATES}
        self.b = {k: ParamTensor(f"{name}.b_{k}",
                                 np.full(h, 1.0) if k == "f" else np.zeros(h))
                  for k in self.GATES}
        self._cache = None
        self._last_state = None

    def params(self) -> list[ParamTensor]:
        out = []
        for k in self.GATES:
            out += [self.W[k], self.U[k], self.b[k]]
        return out

    def _fused(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        Wf = np.hstack([self.W[k].value for k in self.GATES])
        Uf = np.hstack([self.U[k].value for k in self.GATES])
        bf = np.concatenate([self.b[k].value for k in self.GATES])
        return Wf, Uf, bf

    def forward_sequence(self, X: np.ndarray, h0: np.ndarray | None = None,
                         c0: np.ndarray | None = None) -> np.ndarray:
        """Run T steps over X of shape (B, T, input_dim); returns final h (B, H)."""
        X = np.asarray(X, dtype=FLOAT)
        B, T, d = X.shape
        if d != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {d}")
        H = self.hidden_size
        Wf, Uf, bf = self._fused()
        h = np.zeros((B, H), dtype=FLOAT) if h0 is None else np.array(h0, dtype=FLOAT)
        c = np.zeros((B, H), dtype=FLOAT) if c0 is None else np.array(c0, dtype=FLOAT)
        steps = []
        for t in range(T):
            x = X[:, t, :]
            a = x @ Wf + h @ Uf + bf
            i = sigmoid(a[:, :H])
            f = sigmoid(a[:, H:2 * H])
            o = sigmoid(a[:, 2 * H:3 * H])
            g = np.tanh(a[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            steps.append((x, h, c, i, f, o, g, tc))
            c = c_new
            h = o * tc
        self._cache = (steps, Wf, Uf, X.shape)
        self._last_state = (h, c)
        return h

    def backward_sequence(self, dh_last: np.ndarray) -> np.ndarray:
        """Backprop through the cached forward pass; accumulates parameter grads."""
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        steps, Wf, Uf, x_shape = self._cache
        self._cache = None
        B, T, d = x_shape
        H = self.hidden_size
        dX = np.zeros(x_shape, dtype=FLOAT)
        dWf = np.zeros_like(Wf)
        dUf = np.zeros_like(Uf)
        dbf = np.zeros(4 * H, dtype=FLOAT)
        dh = np.asarray(dh_last, dtype=FLOAT).copy()
        dc = np.zeros((B, H), dtype=FLOAT)
        for t in range(T - 1, -1, -1):
            x, h_prev, c_prev, i, f, o, g, tc = steps[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_prev = dc * f
            da = np.hstack([di * i * (1.0 - i),
                            df * f * (1.0 - f),
                            do * o * (1.0 - o),
                            dg * (1.0 - g * g)])
            dWf += x.T @ da
            dUf += h_prev.T @ da
            dbf += da.sum(axis=0)
            dX[:, t, :] = da @ Wf.T
            dh = da @ Uf.T
            dc = dc_prev
        for n, k in enumerate(self.GATES):
            self.W[k].grad += dWf[:, n * H:(n + 1) * H]
            self.U[k].grad += dUf[:, n * H:(n + 1) * H]
            self.b[k].grad += dbf[n * H:(n + 1) * H]
        return dX

    def step(self, x_t: np.ndarray, h_prev: np.ndarray,
             c_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Single recurrence step on vectors; returns (h_t, c_t)."""
        h = self.forward_sequence(np.asarray(x_t, dtype=FLOAT)[None, None, :],
                                  h0=np.asarray(h_prev, dtype=FLOAT)[None, :],
                                  c0=np.asarray(c_prev, dtype=FLOAT)[None, :])
        h_full, c_full = self._last_state
        self._cache = None
        return h[0], c_full[0]


# ---------------------------------------------------------------------------
# losses


def softmax_cross_entropy_batch(logits: np.ndarray, targets: np.ndarray
                                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row losses, probabilities and d(sum loss)/d(logits) for (B, K) logits."""
    logits = np.asarray(logits, dtype=FLOAT)
    targets = np.asarray(targets, dtype=np.int64)
    B, K = logits.shape
    if targets.size and (targets.min() < 0 or targets.max() >= K):
        raise IndexError(f"target index out of range [0, {K})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    denom = expv.sum(axis=1, keepdims=True)
    probs = expv / denom
    # -log p[target] in a form that never takes log of a rounded-to-zero prob
    losses = np.log(denom[:, 0]) - shifted[np.arange(B), targets]
    grad = probs.copy()
    grad[np.arange(B), targets] -= 1.0
    return losses, probs, grad


def softmax_cross_entropy(logits: np.ndarray, target: int
                          ) -> tuple[float, np.ndarray, np.ndarray]:
    """Cross-entropy of a single logit vector against one category index."""
    losses, probs, grad = softmax_cross_entropy_batch(
        np.asarray(logits, dtype=FLOAT)[None, :], np.asarray([target]))
    return float(losses[0]), probs[0], grad[0]


def sigmoid_bce(logit, label):
    """Binary cross-entropy on a sigmoid unit, in overflow-safe form.

    Elementwise over arrays; returns (loss, prob, grad_logit) with
    grad_logit = sigmoid(logit) - label.
    """
    x = np.asarray(logit, dtype=FLOAT)
    y = np.asarray(label, dtype=FLOAT)
    loss = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    prob = sigmoid(x)
    grad = prob - y
    if np.isscalar(logit) or x.ndim == 0:
        return float(loss), float(prob), float(grad)
    return loss, prob, grad


# ---------------------------------------------------------------------------
# verification


def grad_check(loss_fn: Callable[[], float], params: Sequence[ParamTensor],
               epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn must run a deterministic forward+backward pass, accumulating
    into param.grad and returning the scalar loss. Error per entry is
    |a - n| / max(|a|, |n|, 1e-8).
    """
    for p in params:
        p.zero_grad()
    loss_fn()
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()
    worst = 0.0
    for p, ag in zip(params, analytic):
        flat = p.value.reshape(-1)
        aflat = ag.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            lp = loss_fn()
            flat[k] = orig - epsilon
            lm = loss_fn()
            flat[k] = orig
            for q in params:
                q.zero_grad()
            numeric = (lp - lm) / (2.0 * epsilon)
            err = abs(aflat[k] - numeric) / max(abs(aflat[k]), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
