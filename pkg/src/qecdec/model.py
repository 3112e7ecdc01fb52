"""Dual-stream transformer decoder over syndrome and logical-class tokens.

Stage 1 is a small MLP that maps the +/-1 syndrome to prior class
logits.  Stage 2 embeds both streams as tokens: check i becomes
s_i * w_i plus one learned global token, class j becomes its prior
logit times a class embedding.  A stack of pre-norm layers then applies

  1. masked multi-head self-attention over syndrome tokens, the mask
     allowing two checks to interact only when their supports overlap
     (the global token sees everything);
  2. cross-attention sending logical queries against the updated
     syndrome stream (unmasked, global token included), sharing the
     layer's Q/K/V/output projections;
  3. a shared feed-forward block (d -> 4d -> d, GELU) on each stream.

After a final per-stream layer norm, tokens are pooled to scalars and
linear heads emit per-error-bit flip logits and refined class logits.
Output heads start at zero so an untrained model predicts uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, load_checkpoint, save_checkpoint
from .codes import DecodingProblem

__all__ = [
    "ModelConfig",
    "init_params",
    "prior_forward",
    "embed_streams",
    "layer_forward",
    "forward",
    "predict_class",
    "hard_decision",
    "count_params",
    "layer_param_count",
    "flops_forward",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class ModelConfig:
    """Decoder shape: problem sizes plus transformer hyperparameters."""

    n_err: int
    m: int
    n_classes: int
    d: int = 32
    n_layers: int = 3
    heads: int = 4
    share_weights: bool = True

    def __post_init__(self):
        if self.d % self.heads != 0:
            raise ValueError(f"d={self.d} not divisible by heads={self.heads}")
        if min(self.n_err, self.m, self.n_classes, self.d, self.n_layers, self.heads) < 1:
            raise ValueError("all ModelConfig sizes must be positive")

    @classmethod
    def for_problem(cls, problem: DecodingProblem, **kwargs) -> "ModelConfig":
        return cls(n_err=problem.n_err, m=problem.m, n_classes=problem.n_classes, **kwargs)

    def layer_prefixes(self) -> list[str]:
        if self.share_weights:
            return ["layer"] * self.n_layers
        return [f"layer{i}" for i in range(self.n_layers)]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    std = math.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Deterministic parameter initialization keyed by seed."""
    rng = np.random.default_rng(seed)
    d, m, c, n_err = config.d, config.m, config.n_classes, config.n_err
    hidden = 4 * m
    p: dict[str, np.ndarray] = {}
    p["prior.w1"] = _glorot(rng, m, hidden)
    p["prior.b1"] = np.zeros(hidden)
    p["prior.w2"] = np.zeros((hidden, c))  # zero so prior logits start uniform
    p["prior.b2"] = np.zeros(c)
    tok_std = 1.0 / math.sqrt(d)
    p["embed.check"] = rng.normal(0.0, tok_std, size=(m, d))
    p["embed.global"] = rng.normal(0.0, tok_std, size=(d,))
    p["embed.class"] = rng.normal(0.0, tok_std, size=(c, d))
    seen: set[str] = set()
    for prefix in config.layer_prefixes():
        if prefix in seen:
            continue
        seen.add(prefix)
        for w in ("wq", "wk", "wv", "wo"):
            p[f"{prefix}.{w}"] = _glorot(rng, d, d)
        p[f"{prefix}.ffn.w1"] = _glorot(rng, d, 4 * d)
        p[f"{prefix}.ffn.b1"] = np.zeros(4 * d)
        p[f"{prefix}.ffn.w2"] = _glorot(rng, 4 * d, d)
        p[f"{prefix}.ffn.b2"] = np.zeros(d)
        for ln in ("ln_attn_s", "ln_attn_l", "ln_ffn_s", "ln_ffn_l"):
            p[f"{prefix}.{ln}.g"] = np.ones(d)
            p[f"{prefix}.{ln}.b"] = np.zeros(d)
    for ln in ("final.ln_s", "final.ln_l"):
        p[f"{ln}.g"] = np.ones(d)
        p[f"{ln}.b"] = np.zeros(d)
    p["head.pool_s"] = rng.normal(0.0, tok_std, size=(d, 1))
    p["head.out_s"] = np.zeros((n_err, m))  # zero-initialized output head
    p["head.pool_l"] = rng.normal(0.0, tok_std, size=(d, 1))
    p["head.out_l"] = np.zeros((c, c))  # zero-initialized output head
    return {name: Tensor(arr, requires_grad=True) for name, arr in p.items()}


def prior_forward(params: dict[str, Tensor], s: Tensor) -> Tensor:
    """Stage-1 class logits from the +/-1 syndrome, shape (B, n_classes)."""
    hidden = (s @ params["prior.w1"] + params["prior.b1"]).gelu()
    return hidden @ params["prior.w2"] + params["prior.b2"]


def embed_streams(
    params: dict[str, Tensor], config: ModelConfig, s: Tensor, prior_logits: Tensor
) -> tuple[Tensor, Tensor]:
    """Token tensors (B, m+1, d) and (B, n_classes, d) from inputs."""
    b = s.shape[0]
    d = config.d
    checks = s.reshape(b, config.m, 1) * params["embed.check"]
    ones = Tensor(np.ones((b, 1, 1)))
    glob = ones * params["embed.global"].reshape(1, 1, d)
    t_s = concat([glob, checks], axis=1)
    t_l = prior_logits.reshape(b, config.n_classes, 1) * params["embed.class"].reshape(
        1, config.n_classes, d
    )
    return t_s, t_l


def _split_heads(t: Tensor, heads: int) -> Tensor:
    b, tokens, d = t.shape
    return t.reshape(b, tokens, heads, d // heads).swapaxes(1, 2)


def _merge_heads(t: Tensor) -> Tensor:
    b, heads, tokens, dh = t.shape
    return t.swapaxes(1, 2).reshape(b, tokens, heads * dh)


def _attention(
    params: dict[str, Tensor],
    prefix: str,
    queries_from: Tensor,
    keys_values_from: Tensor,
    heads: int,
    allow: np.ndarray | None,
) -> Tensor:
    q = _split_heads(queries_from @ params[f"{prefix}.wq"], heads)
    k = _split_heads(keys_values_from @ params[f"{prefix}.wk"], heads)
    v = _split_heads(keys_values_from @ params[f"{prefix}.wv"], heads)
    d_head = q.shape[-1]
    scores = (q @ k.swapaxes(-1, -2)).scale(1.0 / math.sqrt(d_head))
    if allow is not None:
        allow = allow[None, None, :, :]  # broadcast over batch and heads
    weights = scores.softmax_masked(allow)
    return _merge_heads(weights @ v) @ params[f"{prefix}.wo"]


def _ffn(params: dict[str, Tensor], prefix: str, t: Tensor) -> Tensor:
    hidden = (t @ params[f"{prefix}.ffn.w1"] + params[f"{prefix}.ffn.b1"]).gelu()
    return hidden @ params[f"{prefix}.ffn.w2"] + params[f"{prefix}.ffn.b2"]


def layer_forward(
    params: dict[str, Tensor],
    config: ModelConfig,
    prefix: str,
    t_s: Tensor,
    t_l: Tensor,
    allow: np.ndarray,
) -> tuple[Tensor, Tensor]:
    """One pre-norm decoder layer; returns updated (syndrome, logical) streams."""
    s_norm = t_s.layer_norm(params[f"{prefix}.ln_attn_s.g"], params[f"{prefix}.ln_attn_s.b"])
    t_s = t_s + _attention(params, prefix, s_norm, s_norm, config.heads, allow)
    l_norm = t_l.layer_norm(params[f"{prefix}.ln_attn_l.g"], params[f"{prefix}.ln_attn_l.b"])
    # logical queries read the updated syndrome stream, global token included
    t_l = t_l + _attention(params, prefix, l_norm, t_s, config.heads, None)
    s_norm2 = t_s.layer_norm(params[f"{prefix}.ln_ffn_s.g"], params[f"{prefix}.ln_ffn_s.b"])
    t_s = t_s + _ffn(params, prefix, s_norm2)
    l_norm2 = t_l.layer_norm(params[f"{prefix}.ln_ffn_l.g"], params[f"{prefix}.ln_ffn_l.b"])
    t_l = t_l + _ffn(params, prefix, l_norm2)
    return t_s, t_l


def forward(
    params: dict[str, Tensor],
    config: ModelConfig,
    syndromes_pm: np.ndarray | Tensor,
    allow: np.ndarray,
) -> tuple[Tensor, Tensor, Tensor]:
    """Full decode pass on a batch of +/-1 syndromes.

    Returns (flip logits (B, n_err), class logits (B, n_classes),
    prior class logits (B, n_classes)).
    """
    s = syndromes_pm if isinstance(syndromes_pm, Tensor) else Tensor(syndromes_pm)
    if s.data.ndim != 2 or s.shape[1] != config.m:
        raise ValueError(f"syndromes must be (B, {config.m})")
    prior_logits = prior_forward(params, s)
    t_s, t_l = embed_streams(params, config, s, prior_logits)
    for prefix in config.layer_prefixes():
        t_s, t_l = layer_forward(params, config, prefix, t_s, t_l, allow)
    s_final = t_s.layer_norm(params["final.ln_s.g"], params["final.ln_s.b"])
    l_final = t_l.layer_norm(params["final.ln_l.g"], params["final.ln_l.b"])
    b = s.shape[0]
    pooled_s = (s_final[:, 1:, :] @ params["head.pool_s"]).reshape(b, config.m)
    flip_logits = pooled_s @ params["head.out_s"].swapaxes(0, 1)
    pooled_l = (l_final @ params["head.pool_l"]).reshape(b, config.n_classes)
    class_logits = pooled_l @ params["head.out_l"].swapaxes(0, 1)
    return flip_logits, class_logits, prior_logits


def predict_class(class_logits: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest index."""
    arr = np.atleast_2d(np.asarray(class_logits, dtype=np.float64))
    return arr.argmax(axis=1)


def hard_decision(flip_logits: np.ndarray) -> np.ndarray:
    """Bit i is 1 exactly when its logit is strictly positive."""
    return (np.asarray(flip_logits, dtype=np.float64) > 0.0).astype(np.uint8)


def layer_param_count(config: ModelConfig) -> int:
    """Scalar parameters in one decoder layer."""
    d = config.d
    attn = 4 * d * d
    ffn = d * 4 * d + 4 * d + 4 * d * d + d
    norms = 4 * 2 * d
    return attn + ffn + norms


def count_params(config: ModelConfig) -> int:
    """Total scalar parameter count for the configuration."""
    d, m, c, n_err = config.d, config.m, config.n_classes, config.n_err
    hidden = 4 * m
    prior = m * hidden + hidden + hidden * c + c
    embed = m * d + d + c * d
    unique_layers = 1 if config.share_weights else config.n_layers
    final_norms = 2 * 2 * d
    heads = d + n_err * m + d + c * c
    return prior + embed + unique_layers * layer_param_count(config) + final_norms + heads


def flops_forward(config: ModelConfig, allow: np.ndarray) -> int:
    """Multiply-accumulate count of one single-sample forward pass.

    Attention cost is charged per allowed score entry, since masked
    entries need never be formed for a sparse lattice mask.
    """
    d, m, c, n_err = config.d, config.m, config.n_classes, config.n_err
    t_s, t_l = m + 1, c
    pairs_self = int(np.count_nonzero(allow))
    pairs_cross = t_l * t_s
    hidden = 4 * m
    total = m * hidden + hidden * c  # prior MLP
    total += t_s * d + t_l * d  # token scaling
    for _ in range(config.n_layers):
        total += 2 * (t_s * d + t_l * d)  # layer norms
        total += 3 * t_s * d * d + t_s * d * d  # self QKV + output proj
        total += 2 * pairs_self * d  # scores and weighted sums
        total += t_l * d * d + 2 * t_s * d * d + t_l * d * d  # cross Q, K, V, proj
        total += 2 * pairs_cross * d
        total += (t_s + t_l) * (8 * d * d)  # FFN both streams
    total += t_s * d + t_l * d  # final norms
    total += m * d + n_err * m + c * d + c * c  # pooling and output heads
    return total


def save_model(path, params: dict[str, Tensor], meta: dict) -> None:
    """Checkpoint parameters with their binding metadata."""
    save_checkpoint(path, params, meta)


def load_model(path) -> tuple[dict[str, Tensor], dict]:
    arrays, meta = load_checkpoint(path)
    return {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}, meta
