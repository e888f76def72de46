"""Layer Token Attention: per-position multi-head attention across three branch tokens.

Tokens are stacked as ``(3, N, d)`` (condition, background, sticker).  At each
position the three branch tokens attend only to each other; the attended
output is projected, split back per branch and added through a sigmoid gate::

    T_k' = T_k + sigmoid(alpha_k) * Out_k
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

BRANCHES = 3
GROUPS = ("tokens", "W_Q", "W_K", "W_V", "W_O", "alpha")


class ShapeMismatch(ValueError):
    pass


@dataclass
class LtaParams:
    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray
    W_O: np.ndarray
    heads: int
    alpha: np.ndarray  # (3,) gates for condition, background, sticker

    def __post_init__(self):
        for f in ("W_Q", "W_K", "W_V", "W_O"):
            m = np.asarray(getattr(self, f), dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ShapeMismatch(f"{f} must be square, got {m.shape}")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{f} has non-finite entries")
            setattr(self, f, m)
        d = self.W_Q.shape[0]
        if any(getattr(self, f).shape != (d, d) for f in ("W_K", "W_V", "W_O")):
            raise ShapeMismatch("projection matrices must share one size")
        if self.heads < 1 or d % self.heads:
            raise ShapeMismatch(f"d={d} is not divisible by heads={self.heads}")
        self.alpha = np.asarray(self.alpha, dtype=np.float64).reshape(BRANCHES)

    @property
    def dim(self) -> int:
        return self.W_Q.shape[0]

    @classmethod
    def init(cls, d: int, heads: int, rng: np.random.Generator | int = 0,
             gate: float = -4.0) -> LtaParams:
        """Scaled-normal Q/K/V, identity output projection, nearly closed gates."""
        rng = np.random.default_rng(rng)
        s = 1.0 / np.sqrt(d)
        return cls(rng.normal(0, s, (d, d)), rng.normal(0, s, (d, d)), rng.normal(0, s, (d, d)),
                   np.eye(d), heads, np.full(BRANCHES, gate))

    def copy(self) -> LtaParams:
        return LtaParams(self.W_Q.copy(), self.W_K.copy(), self.W_V.copy(), self.W_O.copy(),
                         self.heads, self.alpha.copy())


@dataclass
class LtaGrads:
    tokens: np.ndarray
    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray
    W_O: np.ndarray
    alpha: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def _check(tokens: np.ndarray, params: LtaParams) -> np.ndarray:
    t = np.asarray(tokens, dtype=np.float64)
    if t.ndim != 3 or t.shape[0] != BRANCHES or t.shape[1] < 1:
        raise ShapeMismatch(f"tokens must be (3, N, d), got {t.shape}")
    if t.shape[2] != params.dim:
        raise ShapeMismatch(f"token dim {t.shape[2]} does not match params dim {params.dim}")
    if not np.all(np.isfinite(t)):
        raise ValueError("tokens have non-finite entries")
    return t


def _split(x: np.ndarray, h: int) -> np.ndarray:
    """(3, N, d) -> (N, h, 3, d/h)."""
    k, n, d = x.shape
    return x.reshape(k, n, h, d // h).transpose(1, 2, 0, 3)


def _merge(x: np.ndarray) -> np.ndarray:
    """(N, h, 3, d/h) -> (3, N, d)."""
    n, h, k, dh = x.shape
    return x.transpose(2, 0, 1, 3).reshape(k, n, h * dh)


def _attend(t: np.ndarray, p: LtaParams) -> dict:
    h = p.heads
    scale = 1.0 / np.sqrt(p.dim // h)
    q, k, v = t @ p.W_Q, t @ p.W_K, t @ p.W_V
    qh, kh, vh = _split(q, h), _split(k, h), _split(v, h)
    scores = np.einsum("nhid,nhjd->nhij", qh, kh) * scale
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    probs = e / e.sum(axis=-1, keepdims=True)
    heads = np.einsum("nhij,nhjd->nhid", probs, vh)
    o = _merge(heads)
    out = o @ p.W_O
    gate = sigmoid(p.alpha)[:, None, None]
    return {"qh": qh, "kh": kh, "vh": vh, "probs": probs, "o": o, "out": out, "gate": gate,
            "scale": scale, "y": t + gate * out}


def attention_probs(tokens: np.ndarray, params: LtaParams) -> np.ndarray:
    """Branch attention weights, shape (N, heads, 3, 3); rows sum to one."""
    return _attend(_check(tokens, params), params)["probs"]


def lta_forward(tokens: np.ndarray, params: LtaParams) -> np.ndarray:
    return _attend(_check(tokens, params), params)["y"]


def lta_backward(tokens: np.ndarray, params: LtaParams, upstream: np.ndarray) -> LtaGrads:
    """Gradients of ``sum(upstream * lta_forward(tokens, params))``."""
    t = _check(tokens, params)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != t.shape:
        raise ShapeMismatch(f"upstream gradient shape {g.shape} != token shape {t.shape}")
    c = _attend(t, params)
    h = params.heads
    gate = c["gate"]

    d_alpha = (gate * (1.0 - gate))[:, 0, 0] * np.einsum("knd,knd->k", g, c["out"])
    d_out = g * gate
    d_WO = np.einsum("knd,kne->de", c["o"], d_out)
    d_heads = _split(d_out @ params.W_O.T, h)

    probs = c["probs"]
    d_probs = np.einsum("nhid,nhjd->nhij", d_heads, c["vh"])
    d_vh = np.einsum("nhij,nhid->nhjd", probs, d_heads)
    d_scores = probs * (d_probs - (d_probs * probs).sum(axis=-1, keepdims=True)) * c["scale"]
    d_qh = np.einsum("nhij,nhjd->nhid", d_scores, c["kh"])
    d_kh = np.einsum("nhij,nhid->nhjd", d_scores, c["qh"])
    dq, dk, dv = _merge(d_qh), _merge(d_kh), _merge(d_vh)

    d_tokens = g + dq @ params.W_Q.T + dk @ params.W_K.T + dv @ params.W_V.T
    return LtaGrads(
        tokens=d_tokens,
        W_Q=np.einsum("knd,kne->de", t, dq),
        W_K=np.einsum("knd,kne->de", t, dk),
        W_V=np.einsum("knd,kne->de", t, dv),
        W_O=d_WO,
        alpha=d_alpha,
    )


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max|a - n| / max(max|a|, max|n|, 1e-12)``."""
    a, n = np.asarray(analytic).ravel(), np.asarray(numeric).ravel()
    den = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-12)
    return float(np.abs(a - n).max(initial=0.0) / den)


def numeric_grads(tokens: np.ndarray, params: LtaParams, upstream: np.ndarray,
                  step: float = 1e-6) -> dict[str, np.ndarray]:
    """Central finite differences of ``sum(upstream * lta_forward)`` for every group."""
    def loss(t, p):
        return float((upstream * lta_forward(t, p)).sum())

    out = {}
    for name in GROUPS:
        t, p = np.array(tokens, dtype=np.float64), params.copy()
        target = t if name == "tokens" else getattr(p, name)
        grad = np.zeros_like(target)
        flat, gflat = target.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = loss(t, p)
            flat[i] = keep - step
            down = loss(t, p)
            flat[i] = keep
            gflat[i] = (up - down) / (2 * step)
        out[name] = grad
    return out


def lta_grad_check(N: int, d: int, h: int, seed: int = 0, step: float = 1e-6) -> dict[str, float]:
    """Worst relative error of the analytic gradient per group.

    Tokens, projections, gates and the upstream gradient are drawn from a unit
    normal with the given seed.
    """
    if h < 1 or d % h:
        raise ShapeMismatch(f"d={d} is not divisible by heads={h}")
    rng = np.random.default_rng(seed)
    tokens = rng.standard_normal((BRANCHES, N, d))
    params = LtaParams(rng.standard_normal((d, d)), rng.standard_normal((d, d)),
                       rng.standard_normal((d, d)), rng.standard_normal((d, d)), h,
                       rng.standard_normal(BRANCHES))
    upstream = rng.standard_normal((BRANCHES, N, d))
    analytic = lta_backward(tokens, params, upstream).as_dict()
    numeric = numeric_grads(tokens, params, upstream, step)
    return {k: relative_error(analytic[k], numeric[k]) for k in GROUPS}
