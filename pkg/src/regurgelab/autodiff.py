"""Reverse-mode automatic differentiation over a flat tape of primitives.

Everything is float64. Each primitive application validates shapes, computes
the forward value, and records a closure that maps the output cotangent to
input cotangents. ``backward`` replays the tape in reverse, accumulating
gradients for tensors that require them.

Primitives: matmul, add, mul, softmax, layernorm, relu, embed_lookup,
concat, transpose, cross_entropy, plus reduce_sum as a convenience reduction.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, GraphError, NumericError, ShapeError

Array = np.ndarray


class Tensor:
    """A named float64 array node. Values must be finite at all times."""

    __slots__ = ("data", "name", "requires_grad")

    def __init__(self, data, name: str = "", requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in tensor {name!r}")
        self.data = arr
        self.name = name
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(name={self.name!r}, shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data, name: str) -> Tensor:
    """A trainable tensor; owns a fresh copy of ``data``."""
    return Tensor(np.array(data, dtype=np.float64), name=name, requires_grad=True)


def constant(data, name: str = "") -> Tensor:
    return Tensor(data, name=name, requires_grad=False)


@dataclass
class TapeNode:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward_fn: Callable[[Array], tuple[Array | None, ...]]


class Tape:
    """Record of primitive applications in execution order."""

    def __init__(self):
        self.nodes: list[TapeNode] = []
        self._produced: set[int] = set()

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward_fn) -> None:
        self.nodes.append(TapeNode(op, tuple(inputs), output, backward_fn))
        self._produced.add(id(output))

    def produced(self, t: Tensor) -> bool:
        return id(t) in self._produced

    def __len__(self) -> int:
        return len(self.nodes)


PRIMITIVES: dict[str, Callable] = {}


def _primitive(name: str):
    def deco(fn):
        PRIMITIVES[name] = fn
        return fn

    return deco


def apply_primitive(tape: Tape, name: str, *inputs: Tensor, **kwargs):
    """Dispatch a primitive by name; unknown names raise ConfigError."""
    if name not in PRIMITIVES:
        raise ConfigError(f"unknown primitive {name!r}; have {sorted(PRIMITIVES)}")
    return PRIMITIVES[name](tape, *inputs, **kwargs)


def _record(tape: Tape, op: str, inputs: Sequence[Tensor], data: Array, backward_fn) -> Tensor:
    out = Tensor(data, name=f"{op}#{len(tape.nodes)}",
                 requires_grad=any(t.requires_grad for t in inputs))
    tape.record(op, inputs, out, backward_fn)
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcasted gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


@_primitive("matmul")
def matmul(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul needs at least 2-d operands", a.shape, b.shape)
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError("matmul inner dimensions differ", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.data.shape[:-2], b.data.shape[:-2])
    except ValueError:
        raise ShapeError("matmul batch dimensions do not broadcast", a.shape, b.shape)
    with np.errstate(all="ignore"):
        data = a.data @ b.data
    adata, bdata = a.data, b.data
    ash, bsh = a.shape, b.shape
    need_a, need_b = a.requires_grad, b.requires_grad

    def bwd(g: Array):
        with np.errstate(all="ignore"):
            ga = _unbroadcast(g @ np.swapaxes(bdata, -1, -2), ash) if need_a else None
            gb = _unbroadcast(np.swapaxes(adata, -1, -2) @ g, bsh) if need_b else None
        return ga, gb

    return _record(tape, "matmul", (a, b), data, bwd)


def _elementwise_binary(tape: Tape, op: str, a: Tensor, b: Tensor) -> Tensor:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op} operands do not broadcast", a.shape, b.shape)
    with np.errstate(all="ignore"):
        data = a.data + b.data if op == "add" else a.data * b.data
    ash, bsh = a.shape, b.shape
    adata, bdata = a.data, b.data
    need_a, need_b = a.requires_grad, b.requires_grad

    if op == "add":
        def bwd(g: Array):
            ga = _unbroadcast(g, ash) if need_a else None
            gb = _unbroadcast(g, bsh) if need_b else None
            return ga, gb
    else:
        def bwd(g: Array):
            with np.errstate(all="ignore"):
                ga = _unbroadcast(g * bdata, ash) if need_a else None
                gb = _unbroadcast(g * adata, bsh) if need_b else None
            return ga, gb

    return _record(tape, op, (a, b), data, bwd)


@_primitive("add")
def add(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    return _elementwise_binary(tape, "add", a, b)


@_primitive("mul")
def mul(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    return _elementwise_binary(tape, "mul", a, b)


@_primitive("softmax")
def softmax(tape: Tape, x: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max subtraction."""
    if x.data.ndim < 1 or x.data.shape[-1] < 1:
        raise ShapeError("softmax needs a non-empty last axis", x.shape)
    with np.errstate(all="ignore"):
        z = x.data - x.data.max(axis=-1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=-1, keepdims=True)
    need = x.requires_grad

    def bwd(g: Array):
        if not need:
            return (None,)
        with np.errstate(all="ignore"):
            dot = (g * s).sum(axis=-1, keepdims=True)
            return (s * (g - dot),)

    return _record(tape, "softmax", (x,), s, bwd)


@_primitive("layernorm")
def layernorm(tape: Tape, x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance (population
    variance, epsilon added under the square root). No learnable scale or
    shift here; models apply those as separate mul/add parameters."""
    if x.data.ndim < 1 or x.data.shape[-1] < 1:
        raise ShapeError("layernorm needs a non-empty last axis", x.shape)
    with np.errstate(all="ignore"):
        mean = x.data.mean(axis=-1, keepdims=True)
        var = x.data.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        y = (x.data - mean) * inv
    need = x.requires_grad

    def bwd(g: Array):
        if not need:
            return (None,)
        with np.errstate(all="ignore"):
            gm = g.mean(axis=-1, keepdims=True)
            gym = (g * y).mean(axis=-1, keepdims=True)
            return (inv * (g - gm - y * gym),)

    return _record(tape, "layernorm", (x,), y, bwd)


@_primitive("relu")
def relu(tape: Tape, x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0.0)
    mask = x.data > 0.0
    need = x.requires_grad

    def bwd(g: Array):
        return (g * mask,) if need else (None,)

    return _record(tape, "relu", (x,), data, bwd)


@_primitive("embed_lookup")
def embed_lookup(tape: Tape, table: Tensor, indices: Tensor) -> Tensor:
    """Row gather from a 2-d table; indices are an integral-valued tensor.

    The gradient scatter-adds into the table; repeated indices accumulate.
    Indices receive no gradient.
    """
    if table.data.ndim != 2:
        raise ShapeError("embed_lookup table must be 2-d", table.shape)
    idx = indices.data
    if not np.all(idx == np.floor(idx)):
        raise ValueError("embed_lookup indices must be integral")
    ii = idx.astype(np.int64)
    if ii.size and (ii.min() < 0 or ii.max() >= table.data.shape[0]):
        raise IndexError(
            f"embed_lookup index out of range for table with {table.data.shape[0]} rows"
        )
    data = table.data[ii]
    dim = table.data.shape[1]
    tsh = table.shape
    need = table.requires_grad

    def bwd(g: Array):
        if not need:
            return None, None
        gt = np.zeros(tsh, dtype=np.float64)
        np.add.at(gt, ii.reshape(-1), g.reshape(-1, dim))
        return gt, None

    return _record(tape, "embed_lookup", (table, indices), data, bwd)


@_primitive("concat")
def concat(tape: Tape, *tensors: Tensor, axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one input")
    datas = [t.data for t in tensors]
    try:
        data = np.concatenate(datas, axis=axis)
    except ValueError:
        raise ShapeError("concat shapes incompatible", *[d.shape for d in datas])
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes[:-1])
    needs = [t.requires_grad for t in tensors]

    def bwd(g: Array):
        parts = np.split(g, splits, axis=axis)
        return tuple(p if need else None for p, need in zip(parts, needs))

    return _record(tape, "concat", tensors, data, bwd)


@_primitive("transpose")
def transpose(tape: Tape, x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is not None:
        if sorted(axes) != list(range(x.data.ndim)):
            raise ShapeError(f"transpose axes {tuple(axes)} are not a permutation", x.shape)
        axes = tuple(axes)
    data = np.transpose(x.data, axes)
    inverse = None if axes is None else tuple(np.argsort(axes))
    need = x.requires_grad

    def bwd(g: Array):
        return (np.transpose(g, inverse),) if need else (None,)

    return _record(tape, "transpose", (x,), data, bwd)


@_primitive("cross_entropy")
def cross_entropy(tape: Tape, probs: Tensor, targets: Tensor) -> Tensor:
    """Summed cross entropy -sum(targets * ln probs) over all positions.

    ``probs`` are probabilities (post-softmax), clipped at 1e-300 before the
    log. Rows of zeros in ``targets`` contribute nothing, which is how
    padding positions are masked out. Targets receive no gradient.
    """
    if probs.shape != targets.shape:
        raise ShapeError("cross_entropy operands must have equal shapes",
                         probs.shape, targets.shape)
    with np.errstate(all="ignore"):
        p = np.clip(probs.data, 1e-300, None)
        data = -np.sum(targets.data * np.log(p))
    tdata = targets.data
    need = probs.requires_grad

    def bwd(g: Array):
        if not need:
            return None, None
        with np.errstate(all="ignore"):
            return (-tdata / p) * g, None

    return _record(tape, "cross_entropy", (probs, targets), data, bwd)


@_primitive("reduce_sum")
def reduce_sum(tape: Tape, x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)
    xsh = x.shape
    need = x.requires_grad

    def bwd(g: Array):
        if not need:
            return (None,)
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, xsh).astype(np.float64, copy=True),)

    return _record(tape, "reduce_sum", (x,), data, bwd)


def backward(tape: Tape, loss: Tensor, params: Sequence[Tensor] | None = None) -> dict[Tensor, Array]:
    """Gradients of a scalar loss with respect to ``params``.

    Parameters the loss does not depend on get zero gradients. When
    ``params`` is None, gradients for every requires_grad leaf on the tape
    are returned.
    """
    if not tape.produced(loss):
        raise GraphError("loss tensor was not produced on this tape")
    if loss.data.size != 1:
        raise GraphError(f"loss must be a scalar, got shape {loss.shape}")
    grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward_fn(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    if params is None:
        leaves: dict[int, Tensor] = {}
        for node in tape.nodes:
            for inp in node.inputs:
                if inp.requires_grad and not tape.produced(inp):
                    leaves.setdefault(id(inp), inp)
        return {t: grads.get(i, np.zeros_like(t.data)) for i, t in leaves.items()}
    return {p: grads.get(id(p), np.zeros_like(p.data)) for p in params}


@dataclass
class AdamState:
    """Adam moment estimates for a fixed ordered parameter list."""

    params: tuple[Tensor, ...]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[Array] = field(default_factory=list)
    v: list[Array] = field(default_factory=list)

    def __post_init__(self):
        self.params = tuple(self.params)
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]


def adam_step(state: AdamState, grads: dict[Tensor, Array]) -> None:
    """One bias-corrected Adam update, applied to parameter data in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for i, p in enumerate(state.params):
        g = grads[p]
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        mhat = state.m[i] / bc1
        vhat = state.v[i] / bc2
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)


@dataclass(frozen=True)
class GradientCheckReport:
    max_rel_error: float
    worst_param: str
    worst_coord: int
    analytic: float
    numeric: float
    num_checked: int


def gradient_check(
    loss_fn: Callable[[], tuple[Tape, Tensor]],
    params: Sequence[Tensor],
    seed: int = 0,
    num_coords: int = 200,
    h: float = 1e-5,
) -> GradientCheckReport:
    """Compare tape gradients against central finite differences.

    ``loss_fn`` must rebuild the graph from the current parameter values on
    every call. A seeded sample of ``num_coords`` coordinates is drawn across
    all parameters; relative error uses max(|analytic|, |numeric|, 1e-6) in
    the denominator so that near-zero gradients are compared absolutely.
    """
    params = list(params)
    tape, loss = loss_fn()
    grads = backward(tape, loss, params=params)
    sizes = [p.data.size for p in params]
    total = sum(sizes)
    if total == 0:
        raise ConfigError("gradient_check needs at least one parameter coordinate")
    rng = np.random.default_rng(seed)
    k = min(num_coords, total)
    chosen = rng.choice(total, size=k, replace=False)
    bounds = np.cumsum(sizes)

    worst = (-1.0, "", -1, 0.0, 0.0)
    for flat in sorted(int(c) for c in chosen):
        pi = int(np.searchsorted(bounds, flat, side="right"))
        coord = flat - (int(bounds[pi - 1]) if pi else 0)
        p = params[pi]
        orig = p.data.flat[coord]
        p.data.flat[coord] = orig + h
        lp = float(loss_fn()[1].data)
        p.data.flat[coord] = orig - h
        lm = float(loss_fn()[1].data)
        p.data.flat[coord] = orig
        numeric = (lp - lm) / (2.0 * h)
        analytic = float(grads[p].flat[coord])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        if rel > worst[0]:
            worst = (rel, p.name, coord, analytic, numeric)
    return GradientCheckReport(
        max_rel_error=worst[0],
        worst_param=worst[1],
        worst_coord=worst[2],
        analytic=worst[3],
        numeric=worst[4],
        num_checked=k,
    )


CHECKPOINT_MAGIC = b"REGURGELAB-CKPT-v1\n"


def save_checkpoint(path: str | Path, tensors: dict[str, Tensor | Array], meta: dict | None = None) -> None:
    """Write named tensors plus a JSON meta block to a binary checkpoint.

    Layout: magic line, little-endian uint64 header length, UTF-8 JSON header
    mapping names to shapes and byte offsets, then the concatenated float64
    little-endian payloads in sorted-name order.
    """
    entries: dict[str, dict] = {}
    payload = bytearray()
    for name in sorted(tensors):
        value = tensors[name]
        arr = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries[name] = {"shape": list(arr.shape), "offset": len(payload)}
        payload += arr.tobytes()
    header = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def load_checkpoint(path: str | Path) -> tuple[dict[str, Array], dict]:
    """Read a checkpoint back as (name -> float64 array, meta)."""
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path} is not a checkpoint file")
    off = len(CHECKPOINT_MAGIC)
    if len(raw) < off + 8:
        raise ValueError(f"{path} is truncated")
    (hlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if len(raw) < off + hlen:
        raise ValueError(f"{path} is truncated")
    try:
        header = json.loads(raw[off: off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path} has a corrupt header: {exc}")
    payload = raw[off + hlen:]
    out: dict[str, Array] = {}
    for name, entry in header["tensors"].items():
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = entry["offset"] + 8 * count
        if end > len(payload):
            raise ValueError(f"{path} payload is truncated for tensor {name!r}")
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"])
        arr = arr.reshape(shape).astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in checkpoint tensor {name!r}")
        out[name] = arr
    return out, header.get("meta", {})
