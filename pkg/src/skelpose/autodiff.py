"""Dense float64 tensors with reverse-mode automatic differentiation.

Just enough machinery for small encoder-decoder and regression networks:
conv / transposed conv (with a bilinear-upsampling initializer), relu,
residual add, linear, max pool, nearest upsample, channel concat, the two
losses, and SGD with momentum and weight decay. Everything is f64 and
single-threaded-deterministic; any NaN or Inf produced by an op is a hard
error rather than a silent poison value.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np


class Tensor:
    """A dense array plus an optional gradient tape node."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 4:
            raise ValueError(f"tensors are at most 4-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError("non-finite value produced")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Reverse sweep from a scalar output; accumulates into .grad fields."""
        if self.size != 1:
            raise ValueError("backward() starts from a scalar")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req,
                  _parents=tuple(p for p in parents if p.requires_grad),
                  _backward=backward if req else None)


# ---------------------------------------------------------------------------
# im2col plumbing shared by conv, transposed conv, and max pool
# ---------------------------------------------------------------------------

def _out_hw(h, w, kh, kw, stride, pad):
    return (h + 2 * pad - kh) // stride + 1, (w + 2 * pad - kw) // stride + 1


def _im2col(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    ho, wo = _out_hw(h, w, kh, kw, stride, pad)
    if ho <= 0 or wo <= 0:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {h}x{w} with pad {pad}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((n, c, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(n, c * kh * kw, ho * wo), ho, wo


def _col2im(cols, xshape, kh, kw, stride, pad, ho, wo):
    n, c, h, w = xshape
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    return xp[:, :, pad:pad + h, pad:pad + w] if pad else xp


def conv2d(x, w, b, stride=1, pad=0):
    """Cross-correlation: x (N,C,H,W), w (O,C,kh,kw), b (O,)."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    n, c, h, hw = x.shape
    o, cw, kh, kw = w.shape
    if cw != c:
        raise ValueError(f"channel mismatch: input has {c}, kernel expects {cw}")
    if b.shape != (o,):
        raise ValueError(f"bias must be ({o},), got {b.shape}")
    if stride < 1 or pad < 0:
        raise ValueError("stride must be >= 1 and pad >= 0")
    cols, ho, wo = _im2col(x.data, kh, kw, stride, pad)
    w2 = w.data.reshape(o, -1)
    out = np.matmul(w2, cols).reshape(n, o, ho, wo) + b.data.reshape(1, o, 1, 1)

    def backward(g):
        gf = g.reshape(n, o, ho * wo)
        if b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
        if w.requires_grad:
            gw = np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0)
            w._accumulate(gw.reshape(w.shape))
        if x.requires_grad:
            gcols = np.matmul(w2.T, gf)
            x._accumulate(_col2im(gcols, x.shape, kh, kw, stride, pad, ho, wo))

    return _make(out, (x, w, b), backward)


def transposed_conv2d(x, w, b, stride=1, pad=0):
    """Adjoint of conv2d: x (N,O,H',W'), w (O,C,kh,kw), b (C,).

    Output spatial size is (H' - 1) * stride + kh - 2 * pad. With the same
    weight tensor, <conv2d(x, w), y> == <x, transposed_conv2d(y, w)> exactly.
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    n, o, hi, wi = x.shape
    ow, c, kh, kw = w.shape
    if ow != o:
        raise ValueError(f"channel mismatch: input has {o}, kernel expects {ow}")
    if b.shape != (c,):
        raise ValueError(f"bias must be ({c},), got {b.shape}")
    if stride < 1 or pad < 0:
        raise ValueError("stride must be >= 1 and pad >= 0")
    h = (hi - 1) * stride + kh - 2 * pad
    ww = (wi - 1) * stride + kw - 2 * pad
    if h <= 0 or ww <= 0:
        raise ValueError("transposed conv output would be empty")
    w2 = w.data.reshape(o, -1)
    xf = x.data.reshape(n, o, hi * wi)
    cols = np.matmul(w2.T, xf)
    out = _col2im(cols, (n, c, h, ww), kh, kw, stride, pad, hi, wi) + b.data.reshape(1, c, 1, 1)

    def backward(g):
        gcols, _, _ = _im2col(g, kh, kw, stride, pad)
        if b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
        if w.requires_grad:
            gw2t = np.matmul(gcols, xf.transpose(0, 2, 1)).sum(axis=0)
            w._accumulate(gw2t.T.reshape(w.shape))
        if x.requires_grad:
            x._accumulate(np.matmul(w2, gcols).reshape(x.shape))

    return _make(out, (x, w, b), backward)


def bilinear_kernel(in_channels, out_channels, k) -> np.ndarray:
    """(in, out, k, k) weights so a stride k//... transposed conv upsamples bilinearly."""
    factor = (k + 1) // 2
    center = factor - 1.0 if k % 2 == 1 else factor - 0.5
    og = np.arange(k, dtype=np.float64)
    filt = (1 - np.abs(og - center) / factor)[:, None] * (1 - np.abs(og - center) / factor)[None, :]
    w = np.zeros((in_channels, out_channels, k, k))
    for i in range(min(in_channels, out_channels)):
        w[i, i] = filt
    return w


def residual_add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(out, (a, b), backward)


def relu(x):
    x = _as_tensor(x)
    out = np.maximum(x.data, 0.0)
    mask = x.data > 0.0  # subgradient 0 at exactly 0

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _make(out, (x,), backward)


def linear(x, w, b):
    """x (N, D) @ w (D, M) + b (M,)."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"linear shape mismatch: x {x.shape}, w {w.shape}")
    if b.shape != (w.shape[1],):
        raise ValueError(f"bias must be ({w.shape[1]},), got {b.shape}")
    out = x.data @ w.data + b.data

    def backward(g):
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))
        if w.requires_grad:
            w._accumulate(x.data.T @ g)
        if x.requires_grad:
            x._accumulate(g @ w.data.T)

    return _make(out, (x, w, b), backward)


def max_pool(x, k, stride):
    x = _as_tensor(x)
    n, c, h, w = x.shape
    if stride < 1 or k < 1:
        raise ValueError("pool size and stride must be >= 1")
    cols, ho, wo = _im2col(x.data.reshape(n * c, 1, h, w), k, k, stride, 0)
    cols = cols.reshape(n * c, k * k, ho * wo)
    am = cols.argmax(axis=1)  # first max wins on ties
    out = np.take_along_axis(cols, am[:, None, :], axis=1).reshape(n, c, ho, wo)

    def backward(g):
        if not x.requires_grad:
            return
        gcols = np.zeros_like(cols)
        np.put_along_axis(gcols, am[:, None, :], g.reshape(n * c, 1, ho * wo), axis=1)
        gx = _col2im(gcols.reshape(n * c, k * k, ho * wo), (n * c, 1, h, w), k, k, stride, 0, ho, wo)
        x._accumulate(gx.reshape(x.shape))

    return _make(out, (x,), backward)


def upsample_nearest(x, factor):
    x = _as_tensor(x)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward(g):
        if x.requires_grad:
            n, c, h, w = x.shape
            x._accumulate(g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)))

    return _make(out, (x,), backward)


def concat_channels(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 4 or b.data.ndim != 4 or a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"cannot concat {a.shape} and {b.shape}")
    out = np.concatenate([a.data, b.data], axis=1)
    ca = a.shape[1]

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[:, :ca])
        if b.requires_grad:
            b._accumulate(g[:, ca:])

    return _make(out, (a, b), backward)


def center_spatial(x):
    """Subtract the per-sample, per-channel spatial mean of a (N, C, H, W)
    tensor. Removes the DC component of the input so downstream convs see
    zero-mean features regardless of the input's brightness level."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ValueError(f"center_spatial expects (N, C, H, W), got {x.shape}")
    out = x.data - x.data.mean(axis=(2, 3), keepdims=True)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g - g.mean(axis=(2, 3), keepdims=True))

    return _make(out, (x,), backward)


def reshape(x, shape):
    x = _as_tensor(x)
    out = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.shape))

    return _make(out, (x,), backward)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def sigmoid_cross_entropy(logits, targets):
    """Mean elementwise -t*log(sigmoid(z)) - (1-t)*log(1-sigmoid(z)).

    Computed in the log-sum-exp form max(z,0) - z*t + log1p(exp(-|z|)), so
    z = +-500 stays finite. Targets may be soft but must lie in [0, 1].
    """
    logits = _as_tensor(logits)
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    if logits.shape != t.shape:
        raise ValueError(f"shape mismatch: {logits.shape} vs {t.shape}")
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("targets must lie in [0, 1]")
    z = logits.data
    per = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    out = per.mean()

    def backward(g):
        if logits.requires_grad:
            sig = 0.5 * (1.0 + np.tanh(0.5 * z))  # overflow-free sigmoid
            logits._accumulate(g * (sig - t) / z.size)

    return _make(out, (logits,), backward)


def euclidean_loss(pred, target):
    """(1 / 2N) * sum of squared differences, N = batch size (leading dim)."""
    pred = _as_tensor(pred)
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if pred.shape != t.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {t.shape}")
    n = pred.shape[0]
    diff = pred.data - t
    out = (diff * diff).sum() / (2.0 * n)

    def backward(g):
        if pred.requires_grad:
            pred._accumulate(g * diff / n)

    return _make(out, (pred,), backward)


# ---------------------------------------------------------------------------
# optimizer and parameter init
# ---------------------------------------------------------------------------

@dataclass
class SgdState:
    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0002
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")


def sgd_step(state: SgdState, params, grads=None):
    """v <- momentum*v - lr*(g + wd*w); w <- w + v.  Updates params in place."""
    for name, p in params.items():
        g = p.grad if grads is None else grads[name]
        if g is None:
            raise ValueError(f"parameter {name} has no gradient")
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {p.data.shape}")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        v = state.momentum * v - state.learning_rate * (g + state.weight_decay * p.data)
        state.velocity[name] = v
        p.data = p.data + v
        if not np.all(np.isfinite(p.data)):
            raise FloatingPointError(f"parameter {name} became non-finite")
    return params


def glorot_uniform(rng, shape, fan_in, fan_out) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


# ---------------------------------------------------------------------------
# checkpoints: JSON manifest + one little-endian f64 blob
# ---------------------------------------------------------------------------

def save_checkpoint(path, params, meta=None):
    """Write `path` (manifest JSON) and `path` with .bin suffix (f64 blob)."""
    path = str(path)
    blob_path = _blob_path(path)
    entries = []
    offset = 0
    chunks = []
    for name, p in params.items():
        data = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
        entries.append({"name": name, "shape": list(data.shape), "offset": offset})
        chunk = np.ascontiguousarray(data, dtype="<f8").tobytes()
        chunks.append(chunk)
        offset += len(chunk)
    manifest = {
        "format": "skelpose-checkpoint-v1",
        "blob": os.path.basename(blob_path),
        "params": entries,
    }
    manifest.update(meta or {})
    with open(blob_path, "wb") as f:
        f.write(b"".join(chunks))
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")


def load_checkpoint(path):
    """Returns (params: dict name -> Tensor(requires_grad=True), manifest dict)."""
    path = str(path)
    with open(path) as f:
        manifest = json.load(f)
    if manifest.get("format") != "skelpose-checkpoint-v1":
        raise ValueError(f"{path}: unknown checkpoint format")
    blob_path = os.path.join(os.path.dirname(path) or ".", manifest["blob"])
    with open(blob_path, "rb") as f:
        blob = f.read()
    params = {}
    for e in manifest["params"]:
        shape = tuple(e["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=e["offset"]).reshape(shape)
        params[e["name"]] = Tensor(arr.copy(), requires_grad=True)
    return params, manifest


def _blob_path(path):
    return path[:-5] + ".bin" if path.endswith(".json") else path + ".bin"
