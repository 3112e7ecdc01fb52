"""Reverse-mode automatic differentiation on float64 numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced; backward()
runs a reverse topological sweep accumulating gradients into .grad.
Only the operations the decoder needs are provided, with broadcasting
limited to what those call sites use.  All math is float64.  Any NaN
entering or leaving an operation raises immediately.

Also here: Adam with bias correction, a central-difference gradient
checker, and the parameter checkpoint file format (a version header,
a JSON metadata block, then named little-endian float64 blobs).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "concat",
    "cross_entropy_logits",
    "AdamState",
    "adam_step",
    "zero_grads",
    "gradient_check",
    "GradCheckReport",
    "save_checkpoint",
    "load_checkpoint",
]

_NEG_MASK = -1e30  # additive stand-in for -inf; underflows to exact 0 in exp
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _check_nan(arr: np.ndarray, where: str) -> np.ndarray:
    if np.isnan(arr).any():
        raise FloatingPointError(f"NaN encountered in {where}")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to shape, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Node in the computation graph holding a float64 array."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad: bool = False, _prev: tuple = ()):
        self.data = _check_nan(np.asarray(data, dtype=np.float64), "tensor input")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward = lambda: None
        self._prev = _prev

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"

    def _accum(self, g: np.ndarray) -> None:
        self.grad = g if self.grad is None else self.grad + g

    # ---- arithmetic ----

    def __add__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor(self.data + other.data, _prev=(self, other))

        def _backward():
            self._accum(_unbroadcast(out.grad, self.data.shape))
            other._accum(_unbroadcast(out.grad, other.data.shape))

        out._backward = _backward
        return out

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            return self.scale(float(other))
        out = Tensor(self.data * other.data, _prev=(self, other))

        def _backward():
            self._accum(_unbroadcast(out.grad * other.data, self.data.shape))
            other._accum(_unbroadcast(out.grad * self.data, other.data.shape))

        out._backward = _backward
        return out

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return self.scale(-1.0)

    def __sub__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def scale(self, c: float) -> "Tensor":
        out = Tensor(self.data * c, _prev=(self,))

        def _backward():
            self._accum(out.grad * c)

        out._backward = _backward
        return out

    def __matmul__(self, other: "Tensor") -> "Tensor":
        a, b = self.data, other.data
        out = Tensor(_check_nan(a @ b, "matmul"), _prev=(self, other))

        def _backward():
            g = out.grad
            if b.ndim == 2 and a.ndim > 2:
                # stacked rows times a plain matrix: flatten to one GEMM
                self._accum((g @ b.T).reshape(a.shape))
                other._accum(a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1]))
                return
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            self._accum(_unbroadcast(ga, a.shape))
            other._accum(_unbroadcast(gb, b.shape))

        out._backward = _backward
        return out

    # ---- pointwise nonlinearities ----

    def sigmoid(self) -> "Tensor":
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(s, _prev=(self,))

        def _backward():
            self._accum(out.grad * s * (1.0 - s))

        out._backward = _backward
        return out

    def tanh(self) -> "Tensor":
        t = np.tanh(self.data)
        out = Tensor(t, _prev=(self,))

        def _backward():
            self._accum(out.grad * (1.0 - t * t))

        out._backward = _backward
        return out

    def log(self) -> "Tensor":
        if np.any(self.data <= 0.0):
            raise FloatingPointError("log of non-positive value")
        out = Tensor(np.log(self.data), _prev=(self,))

        def _backward():
            self._accum(out.grad / self.data)

        out._backward = _backward
        return out

    def gelu(self) -> "Tensor":
        x = self.data
        phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        out = Tensor(x * phi, _prev=(self,))

        def _backward():
            dens = np.exp(-0.5 * x * x) * _INV_SQRT2PI
            self._accum(out.grad * (phi + x * dens))

        out._backward = _backward
        return out

    def clamp_min(self, floor: float) -> "Tensor":
        out = Tensor(np.maximum(self.data, floor), _prev=(self,))

        def _backward():
            self._accum(out.grad * (self.data >= floor))

        out._backward = _backward
        return out

    # ---- shape ops ----

    def reshape(self, *shape) -> "Tensor":
        old = self.data.shape
        out = Tensor(self.data.reshape(*shape), _prev=(self,))

        def _backward():
            self._accum(out.grad.reshape(old))

        out._backward = _backward
        return out

    def swapaxes(self, a1: int, a2: int) -> "Tensor":
        out = Tensor(np.swapaxes(self.data, a1, a2), _prev=(self,))

        def _backward():
            self._accum(np.swapaxes(out.grad, a1, a2))

        out._backward = _backward
        return out

    def __getitem__(self, idx) -> "Tensor":
        out = Tensor(self.data[idx], _prev=(self,))

        def _backward():
            g = np.zeros_like(self.data)
            np.add.at(g, idx, out.grad)
            self._accum(g)

        out._backward = _backward
        return out

    # ---- reductions ----

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), _prev=(self,))

        def _backward():
            g = out.grad
            if not keepdims and axis is not None:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.data.shape).copy())

        out._backward = _backward
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            total = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            total = 1
            for ax in axes:
                total *= self.data.shape[ax]
        return self.sum(axis=axis, keepdims=keepdims).scale(1.0 / total)

    # ---- composite layers ----

    def layer_norm(self, gamma: "Tensor", beta: "Tensor", eps: float = 1e-5) -> "Tensor":
        x = self.data
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        y = (x - mu) * inv
        out = Tensor(gamma.data * y + beta.data, _prev=(self, gamma, beta))

        def _backward():
            g = out.grad
            axes = tuple(range(g.ndim - 1))
            gamma._accum((g * y).sum(axis=axes))
            beta._accum(g.sum(axis=axes))
            dy = g * gamma.data
            self._accum(
                (dy - dy.mean(axis=-1, keepdims=True) - y * (dy * y).mean(axis=-1, keepdims=True))
                * inv
            )

        out._backward = _backward
        return out

    def softmax_masked(self, allow: np.ndarray | None = None) -> "Tensor":
        """Row softmax over the last axis with hard masking.

        allow is a boolean array broadcastable to the input; disallowed
        positions get exactly zero weight and exactly zero gradient.
        Every row must keep at least one allowed position.
        """
        z = self.data
        if allow is not None:
            allow = np.broadcast_to(np.asarray(allow, dtype=bool), z.shape)
            z = z + np.where(allow, 0.0, _NEG_MASK)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        if allow is not None:
            e = e * allow
        denom = e.sum(axis=-1, keepdims=True)
        if np.any(denom == 0.0):
            raise FloatingPointError("softmax row with no allowed positions")
        p = e / denom
        out = Tensor(p, _prev=(self,))

        def _backward():
            g = out.grad
            self._accum(p * (g - (g * p).sum(axis=-1, keepdims=True)))

        out._backward = _backward
        return out

    # ---- graph traversal ----

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() starts from a scalar tensor")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if id(child) not in visited:
                    stack.append((child, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            node._backward()


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    out = Tensor(np.concatenate(datas, axis=axis), _prev=tuple(tensors))
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def _backward():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * out.grad.ndim
            sl[axis] = slice(lo, hi)
            t._accum(out.grad[tuple(sl)])

    out._backward = _backward
    return out


def cross_entropy_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean cross entropy of integer targets under row logits (B, C).

    Stabilized by max subtraction before the log-sum-exp.
    """
    z = logits.data
    if z.ndim != 2:
        raise ValueError("cross_entropy_logits expects (B, C) logits")
    targets = np.asarray(targets, dtype=np.int64)
    b = z.shape[0]
    zs = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=1))
    losses = lse - zs[np.arange(b), targets]
    out = Tensor(losses.mean(), _prev=(logits,))

    def _backward():
        p = np.exp(zs)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(b), targets] -= 1.0
        logits._accum(out.grad * p / b)

    out._backward = _backward
    return out


# ---- optimization ----


@dataclass
class AdamState:
    """Adam moments keyed by parameter name."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update; mutates params and state in place."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / corr1
        v_hat = state.v[name] / corr2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


# ---- gradient checking ----


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_param: dict


def gradient_check(
    fn,
    params: dict[str, Tensor],
    eps: float = 1e-5,
    max_entries_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of scalar fn() against central differences.

    fn must rebuild its graph from params on every call.  When
    max_entries_per_param is set, that many coordinates per tensor are
    probed (chosen by rng); otherwise every coordinate is.
    """
    if max_entries_per_param is not None and rng is None:
        rng = np.random.default_rng(0)
    zero_grads(params)
    fn().backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    per_param: dict = {}
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries_per_param is not None and n > max_entries_per_param:
            idxs = rng.choice(n, size=max_entries_per_param, replace=False)
        else:
            idxs = np.arange(n)
        rel_max = 0.0
        for i in idxs:
            keep = flat[i]
            flat[i] = keep + eps
            f_plus = float(fn().data)
            flat[i] = keep - eps
            f_minus = float(fn().data)
            flat[i] = keep
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[name].reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            rel_max = max(rel_max, rel)
        per_param[name] = rel_max
        worst = max(worst, rel_max)
    return GradCheckReport(max_rel_err=worst, per_param=per_param)


# ---- checkpoint file format ----

_MAGIC = b"QDCK"
_VERSION = 1


def save_checkpoint(path, tensors: dict, meta: dict | None = None) -> None:
    """Write named float64 arrays with a version header and JSON metadata."""
    meta_blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(meta_blob)))
        f.write(meta_blob)
        f.write(struct.pack("<I", len(tensors)))
        for name, t in tensors.items():
            arr = np.asarray(t.data if isinstance(t, Tensor) else t, dtype="<f8")
            blob = name.encode("utf-8")
            f.write(struct.pack("<H", len(blob)))
            f.write(blob)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes(order="C"))


def load_checkpoint(path) -> tuple[dict, dict]:
    """Read a checkpoint; returns (name -> float64 array, metadata dict)."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, meta_len = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 12
    meta = json.loads(raw[off : off + meta_len].decode("utf-8"))
    off += meta_len
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    tensors: dict = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape)
        off += 8 * size
        tensors[name] = arr.astype(np.float64)
    if off != len(raw):
        raise ValueError("trailing bytes in checkpoint file")
    return tensors, meta
