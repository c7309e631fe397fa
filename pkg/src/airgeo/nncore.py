"""Minimal dense/recurrent layers with explicit forward and backward passes.

Everything is float64 numpy. Layer objects own their parameters and
accumulate gradients in matching `d`-prefixed arrays; `zero_grad()` clears
them. Stateless math is also exposed as plain functions so small pieces can
be tested in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dense",
    "LstmCellParams",
    "Lstm",
    "BiLstm",
    "LuongAttention",
    "LayerNorm",
    "Adam",
    "GradCheckReport",
    "dense_forward",
    "dense_backward",
    "lstm_cell_forward",
    "bilstm_forward",
    "luong_attention",
    "layer_norm",
    "dropout_mask",
    "huber_loss",
    "adam_step",
    "lr_at_step",
    "grad_check",
    "sigmoid",
    "init_uniform",
]


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function; exp overflow saturates cleanly to 0."""
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def init_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform init in +-1/sqrt(fan_in)."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# Dense layer
# ---------------------------------------------------------------------------


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """x (B, n_in) @ weights (n_in, n_out) + bias (n_out,)."""
    x, weights, bias = _as_f64(x), _as_f64(weights), _as_f64(bias)
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ValueError(
            f"dense dimension mismatch: x {x.shape} vs weights {weights.shape}"
        )
    if bias.shape != (weights.shape[1],):
        raise ValueError(
            f"dense bias mismatch: bias {bias.shape} vs weights {weights.shape}"
        )
    return x @ weights + bias


def dense_backward(
    dy: np.ndarray, x: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dW, db) for y = x @ W + b given dy (B, n_out)."""
    return dy @ weights.T, x.T @ dy, dy.sum(axis=0)


class Dense:
    """Fully connected layer y = x @ W + b with cached input for backward."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W = init_uniform(rng, (in_dim, out_dim), in_dim)
        self.b = init_uniform(rng, (out_dim,), in_dim)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        y = dense_forward(x, self.W, self.b)
        self._x = x
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx, dW, db = dense_backward(dy, self._x, self.W)
        self.dW += dW
        self.db += db
        return dx

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def grads(self):
        return [("W", self.dW), ("b", self.db)]

    def zero_grad(self):
        self.dW[:] = 0.0
        self.db[:] = 0.0


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------


@dataclass
class LstmCellParams:
    """Gate weights for one LSTM direction.

    W (input_dim, 4H), U (hidden_dim, 4H), b (4H,); gate blocks ordered
    input, forget, output, candidate.
    """

    input_dim: int
    hidden_dim: int
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    dW: np.ndarray = field(default=None, repr=False)
    dU: np.ndarray = field(default=None, repr=False)
    db: np.ndarray = field(default=None, repr=False)

    @classmethod
    def create(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        h4 = 4 * hidden_dim
        return cls(
            input_dim=input_dim,
            hidden_dim=hidden_dim,
            W=init_uniform(rng, (input_dim, h4), input_dim),
            U=init_uniform(rng, (hidden_dim, h4), hidden_dim),
            b=init_uniform(rng, (h4,), input_dim + hidden_dim),
        )

    def __post_init__(self):
        h4 = 4 * self.hidden_dim
        if self.W.shape != (self.input_dim, h4) or self.U.shape != (self.hidden_dim, h4):
            raise ValueError(
                f"LSTM weight shapes {self.W.shape}/{self.U.shape} inconsistent with "
                f"dims ({self.input_dim}, {self.hidden_dim})"
            )
        if self.b.shape != (h4,):
            raise ValueError(f"LSTM bias shape {self.b.shape}, expected ({h4},)")
        if self.dW is None:
            self.dW = np.zeros_like(self.W)
            self.dU = np.zeros_like(self.U)
            self.db = np.zeros_like(self.b)

    def zero_grad(self):
        self.dW[:] = 0.0
        self.dU[:] = 0.0
        self.db[:] = 0.0


def _cell_step(x_t, h_prev, c_prev, p: LstmCellParams, zx=None):
    """One gate evaluation on a (B, .) batch. Returns (h, c, cache)."""
    H = p.hidden_dim
    z = (x_t @ p.W if zx is None else zx) + h_prev @ p.U + p.b
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H : 2 * H])
    o = sigmoid(z[:, 2 * H : 3 * H])
    g = np.tanh(z[:, 3 * H :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (i, f, o, g, c_prev, tc)


def lstm_cell_forward(
    x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, p: LstmCellParams
) -> tuple[np.ndarray, np.ndarray]:
    """Single LSTM step on 1-D vectors: sigmoid gates, tanh squashing."""
    x_t, h_prev, c_prev = _as_f64(x_t), _as_f64(h_prev), _as_f64(c_prev)
    if x_t.shape != (p.input_dim,):
        raise ValueError(f"input shape {x_t.shape} vs cell input_dim {p.input_dim}")
    if h_prev.shape != (p.hidden_dim,) or c_prev.shape != (p.hidden_dim,):
        raise ValueError(
            f"state shapes {h_prev.shape}/{c_prev.shape} vs hidden_dim {p.hidden_dim}"
        )
    h, c, _ = _cell_step(x_t[None, :], h_prev[None, :], c_prev[None, :], p)
    return h[0], c[0]


class Lstm:
    """Single-direction LSTM over (B, T, input_dim) batches with BPTT."""

    def __init__(self, p: LstmCellParams):
        self.p = p
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        B, T, D = x.shape
        p = self.p
        if D != p.input_dim:
            raise ValueError(f"sequence width {D} vs cell input_dim {p.input_dim}")
        H = p.hidden_dim
        zx = (x.reshape(B * T, D) @ p.W).reshape(B, T, 4 * H)
        hs = np.zeros((B, T, H))
        h_prevs = np.zeros((B, T, H))  # h entering each step, for dU
        caches = []
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        for t in range(T):
            h_prevs[:, t] = h
            h, c, cache = _cell_step(None, h, c, p, zx=zx[:, t])
            hs[:, t] = h
            caches.append(cache)
        self._cache = (x, h_prevs, caches)
        return hs

    def backward(self, dh_seq: np.ndarray) -> np.ndarray:
        """dh_seq (B, T, H) -> dx (B, T, input_dim); accumulates param grads."""
        x, h_prevs, caches = self._cache
        B, T, _ = x.shape
        p = self.p
        H = p.hidden_dim
        dz_seq = np.zeros((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            i, f, o, g, c_prev, tc = caches[t]
            dh = dh_seq[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dz_seq[:, t]
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H : 2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
            dz[:, 3 * H :] = dc * i * (1.0 - g * g)
            dc_next = dc * f
            dh_next = dz @ p.U.T
        dz_flat = dz_seq.reshape(B * T, 4 * H)
        p.dW += x.reshape(B * T, -1).T @ dz_flat
        p.dU += h_prevs.reshape(B * T, H).T @ dz_flat
        p.db += dz_flat.sum(axis=0)
        return dz_seq @ p.W.T

    def final_state(self) -> np.ndarray:
        _, _, caches = self._cache
        i, f, o, g, c_prev, tc = caches[-1]
        return o * tc


class BiLstm:
    """Forward + reversed-direction LSTM; output row t is [h_fwd_t, h_bwd_t]."""

    def __init__(self, fwd: LstmCellParams, bwd: LstmCellParams):
        if fwd.input_dim != bwd.input_dim or fwd.hidden_dim != bwd.hidden_dim:
            raise ValueError("forward/backward cell dims differ")
        self.fwd = Lstm(fwd)
        self.bwd = Lstm(bwd)
        self.hidden_dim = fwd.hidden_dim

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] < 1:
            raise ValueError(f"expected non-empty (B, T, D) sequence, got {x.shape}")
        hf = self.fwd.forward(x)
        hb = self.bwd.forward(x[:, ::-1])[:, ::-1]
        return np.concatenate([hf, hb], axis=2)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        H = self.hidden_dim
        dxf = self.fwd.backward(dy[:, :, :H])
        dxb = self.bwd.backward(dy[:, ::-1, H:])[:, ::-1]
        return dxf + dxb

    def final_state(self) -> np.ndarray:
        """Concatenated last states of both directions, (B, 2H)."""
        return np.concatenate([self.fwd.final_state(), self.bwd.final_state()], axis=1)

    def params(self):
        return [
            ("fwd.W", self.fwd.p.W), ("fwd.U", self.fwd.p.U), ("fwd.b", self.fwd.p.b),
            ("bwd.W", self.bwd.p.W), ("bwd.U", self.bwd.p.U), ("bwd.b", self.bwd.p.b),
        ]

    def grads(self):
        return [
            ("fwd.W", self.fwd.p.dW), ("fwd.U", self.fwd.p.dU), ("fwd.b", self.fwd.p.db),
            ("bwd.W", self.bwd.p.dW), ("bwd.U", self.bwd.p.dU), ("bwd.b", self.bwd.p.db),
        ]

    def zero_grad(self):
        self.fwd.p.zero_grad()
        self.bwd.p.zero_grad()


def bilstm_forward(
    seq: np.ndarray, fwd: LstmCellParams, bwd: LstmCellParams
) -> np.ndarray:
    """Run both directions over one (T, input_dim) sequence -> (T, 2H)."""
    seq = _as_f64(seq)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise ValueError(f"expected non-empty (T, D) sequence, got shape {seq.shape}")
    return BiLstm(fwd, bwd).forward(seq[None])[0]


# ---------------------------------------------------------------------------
# Attention
# ---------------------------------------------------------------------------


def _softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


class LuongAttention:
    """Bilinear (general) scores over timestep states, softmax-pooled.

    score_t = query . A . state_t; context = sum_t softmax(score)_t state_t.
    """

    def __init__(self, dim: int, rng: np.random.Generator):
        self.dim = dim
        self.A = init_uniform(rng, (dim, dim), dim)
        self.dA = np.zeros_like(self.A)
        self._cache = None

    def forward(self, states: np.ndarray, query: np.ndarray):
        if states.ndim != 3 or states.shape[1] == 0:
            raise ValueError(f"expected non-empty (B, T, D) states, got {states.shape}")
        if states.shape[2] != self.dim or query.shape[1] != self.dim:
            raise ValueError(
                f"attention dim mismatch: states {states.shape}, query {query.shape}, "
                f"A {self.A.shape}"
            )
        qa = query @ self.A  # (B, D)
        scores = np.einsum("bd,btd->bt", qa, states)
        w = _softmax(scores, axis=1)
        context = np.einsum("bt,btd->bd", w, states)
        self._cache = (states, query, qa, w)
        return context, w

    def backward(self, dcontext: np.ndarray):
        """Returns (dstates, dquery); accumulates dA."""
        states, query, qa, w = self._cache
        dw = np.einsum("bd,btd->bt", dcontext, states)
        dstates = w[:, :, None] * dcontext[:, None, :]
        ds = w * (dw - (dw * w).sum(axis=1, keepdims=True))  # softmax backward
        dqa = np.einsum("bt,btd->bd", ds, states)
        dstates += ds[:, :, None] * qa[:, None, :]
        self.dA += query.T @ dqa
        dquery = dqa @ self.A.T
        return dstates, dquery

    def params(self):
        return [("A", self.A)]

    def grads(self):
        return [("A", self.dA)]

    def zero_grad(self):
        self.dA[:] = 0.0


def luong_attention(
    states: np.ndarray, query: np.ndarray, scoring: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Single-sequence attention: states (T, D), query (D) -> (context, weights)."""
    states, query, scoring = _as_f64(states), _as_f64(query), _as_f64(scoring)
    att = LuongAttention.__new__(LuongAttention)
    att.dim = scoring.shape[0]
    att.A = scoring
    att.dA = np.zeros_like(scoring)
    ctx, w = att.forward(states[None], query[None])
    return ctx[0], w[0]


# ---------------------------------------------------------------------------
# Normalization and dropout
# ---------------------------------------------------------------------------


def layer_norm(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """(x - mean)/sqrt(pop. var + eps) * gamma + beta along the last axis."""
    x, gamma, beta = _as_f64(x), _as_f64(gamma), _as_f64(beta)
    if x.shape[-1] != gamma.shape[-1] or gamma.shape != beta.shape:
        raise ValueError(
            f"layer_norm length mismatch: x {x.shape}, gamma {gamma.shape}, "
            f"beta {beta.shape}"
        )
    if eps <= 0:
        raise ValueError("eps must be > 0")
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


class LayerNorm:
    """Learnable normalization over the last axis; gamma starts 1, beta 0."""

    def __init__(self, dim: int, eps: float = 1e-5):
        self.dim = dim
        self.eps = eps
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.dgamma = np.zeros(dim)
        self.dbeta = np.zeros(dim)
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        self._cache = (xhat, inv)
        return xhat * self.gamma + self.beta

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv = self._cache
        lead = tuple(range(dy.ndim - 1))
        self.dgamma += (dy * xhat).sum(axis=lead)
        self.dbeta += dy.sum(axis=lead)
        dxhat = dy * self.gamma
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return inv * (dxhat - m1 - xhat * m2)

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def grads(self):
        return [("gamma", self.dgamma), ("beta", self.dbeta)]

    def zero_grad(self):
        self.dgamma[:] = 0.0
        self.dbeta[:] = 0.0


def dropout_mask(n: int, rate: float, rng_seed) -> np.ndarray:
    """Inverted-dropout mask of length n with entries in {0, 1/(1-rate)}.

    `rng_seed` may be an int seed or a Generator. rate=0 is the identity mask.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if rate == 0.0:
        return np.ones(n)
    return (rng.random(n) >= rate) / (1.0 - rate)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def huber_loss(
    pred: np.ndarray, target: np.ndarray, delta: float = 1.0
) -> tuple[float, np.ndarray]:
    """Mean Huber loss and its gradient w.r.t. pred.

    Per element: 0.5 e^2 for |e| <= delta, else delta (|e| - 0.5 delta).
    """
    pred, target = _as_f64(pred), _as_f64(target)
    if pred.shape != target.shape:
        raise ValueError(f"pred shape {pred.shape} vs target shape {target.shape}")
    if pred.size == 0:
        raise ValueError("huber_loss on empty input")
    if delta <= 0:
        raise ValueError(f"huber delta must be > 0, got {delta}")
    e = pred - target
    a = np.abs(e)
    quad = a <= delta
    loss = np.where(quad, 0.5 * e * e, delta * (a - 0.5 * delta)).mean()
    grad = np.where(quad, e, delta * np.sign(e)) / e.size
    return float(loss), grad


# ---------------------------------------------------------------------------
# Optimizer and schedule
# ---------------------------------------------------------------------------


class Adam:
    """Bias-corrected Adam; moment arrays mirror the parameter list."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads, lr: float) -> None:
        if lr <= 0:
            raise ValueError(f"learning rate must be > 0, got {lr}")
        if len(params) != len(self.m):
            raise ValueError(
                f"parameter count {len(params)} vs optimizer state {len(self.m)}"
            )
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape or p.shape != m.shape:
                raise ValueError(
                    f"shape mismatch in adam step: param {p.shape}, grad {g.shape}, "
                    f"state {m.shape}"
                )
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params, grads, state: Adam, lr: float) -> None:
    """Apply one Adam update in place and advance the step counter."""
    state.step(params, grads, lr)


def lr_at_step(
    step: int,
    base_lr: float = 1e-3,
    decay: float = 0.8,
    interval: int = 30000,
) -> float:
    """Staircase schedule: base_lr * decay^floor(step/interval)."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    return base_lr * decay ** (step // interval)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict
    ok: bool
    failures: list

    def __str__(self):
        status = "OK" if self.ok else "FAILED: " + "; ".join(self.failures)
        return f"grad_check max_rel_error={self.max_rel_error:.3e} [{status}]"


def grad_check(
    loss_fn,
    params: dict,
    analytic: dict,
    h: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    `loss_fn()` re-evaluates the scalar loss from the live arrays in
    `params`; each is perturbed entry-wise by +-h. Relative error uses
    |a - n| / max(|a|, |n|, floor). Non-finite analytic entries fail the
    report and name the parameter.
    """
    per_param = {}
    failures = []
    worst = 0.0
    for name, p in params.items():
        a = analytic[name]
        if a.shape != p.shape:
            raise ValueError(
                f"analytic gradient shape {a.shape} vs parameter {p.shape} for {name!r}"
            )
        if not np.all(np.isfinite(a)):
            failures.append(f"non-finite gradient in {name!r}")
            per_param[name] = np.inf
            worst = np.inf
            continue
        num = np.empty_like(p)
        for ix in np.ndindex(p.shape):
            orig = p[ix]
            p[ix] = orig + h
            up = loss_fn()
            p[ix] = orig - h
            down = loss_fn()
            p[ix] = orig
            num[ix] = (up - down) / (2.0 * h)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), floor)
        err = float((np.abs(a - num) / denom).max()) if p.size else 0.0
        per_param[name] = err
        worst = max(worst, err)
        if err > tol:
            failures.append(f"{name!r} rel. error {err:.3e} > {tol:.1e}")
    return GradCheckReport(
        max_rel_error=worst, per_param=per_param, ok=not failures, failures=failures
    )
