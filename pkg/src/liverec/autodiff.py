"""Dense float64 tensors with taped reverse-mode differentiation.

The tape is a flat Wengert list: every tracked operation appends one
record ``(kind, input node ids, saved values)`` and ``backward`` runs a
single reverse sweep over it, accumulating gradients per node.  Tapes are
cheap and single-use: build a graph, call backward once, throw the tape
away.  A tape must not be shared between threads; tensors that are not
tracked on any tape are immutable and safe to share.

Operands may be Tensors, numpy arrays, or Python scalars; non-Tensor
operands are treated as constants.  Limited broadcasting is supported in
``add``/``multiply_elementwise`` (equal shapes, scalar against anything,
and the (M,1)/(1,N) outer pattern the attention layers use).
"""
from __future__ import annotations

from math import prod
from typing import Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "ShapeError",
    "Tensor",
    "Tape",
    "backward",
    "forward_op",
    "FORWARD_OPS",
    "add",
    "multiply_elementwise",
    "matmul",
    "concat",
    "reduce_sum",
    "sigmoid",
    "tanh",
    "relu",
    "softmax",
    "dot",
    "log",
    "clamp",
    "embedding_lookup",
    "dropout_mask_apply",
    "reshape",
    "transpose",
]


class ShapeError(ValueError):
    """Operand shapes do not conform to an op's rule."""

    def __init__(self, kind: str, *shapes):
        self.kind = kind
        self.shapes = tuple(tuple(int(n) for n in s) for s in shapes)
        shown = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{kind}: incompatible shapes {shown}")


class Tensor:
    """A dense float64 array, optionally tracked on a tape."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape: "Tape | None" = None, node_id: int | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def tracked(self) -> bool:
        return self.node_id is not None

    def item(self) -> float:
        return float(self.data)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return multiply_elementwise(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, tracked={self.tracked})"


class Tape:
    """Append-only record of operations plus per-node gradient buffers.

    ``nodes[i]`` is ``(kind, input node ids, saved values)``; inputs of a
    node always precede it, so one reverse sweep visits each node exactly
    once.  ``gradients`` holds the buffers of the most recent backward
    pass (None before that).
    """

    __slots__ = ("nodes", "gradients", "leaf_ids")

    def __init__(self):
        self.nodes: list[tuple] = []
        self.gradients: list | None = None
        self.leaf_ids: list[int] = []

    def watch(self, array) -> Tensor:
        """Register a trainable leaf and return its tracked tensor."""
        data = np.asarray(array, dtype=np.float64)
        nid = len(self.nodes)
        self.nodes.append(("leaf", (), (data.shape,)))
        self.leaf_ids.append(nid)
        return Tensor(data, self, nid)


def _parts(x):
    if isinstance(x, Tensor):
        return x.data, x.node_id, x.tape
    return np.asarray(x, dtype=np.float64), None, None


def _tape_of(*tracked):
    tape = None
    for nid, tp in tracked:
        if nid is None:
            continue
        if tape is None:
            tape = tp
        elif tape is not tp:
            raise ValueError("operands tracked on different tapes")
    return tape


def _emit(tape, kind, input_ids, saved, out):
    if tape is None:
        return Tensor(out)
    nid = len(tape.nodes)
    tape.nodes.append((kind, input_ids, saved))
    return Tensor(out, tape, nid)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# forward ops


def add(a, b) -> Tensor:
    ad, ai, at = _parts(a)
    bd, bi, bt = _parts(b)
    try:
        out = ad + bd
    except ValueError:
        raise ShapeError("add", ad.shape, bd.shape) from None
    tape = _tape_of((ai, at), (bi, bt))
    return _emit(tape, "add", (ai, bi), (ad.shape, bd.shape), out)


def multiply_elementwise(a, b) -> Tensor:
    ad, ai, at = _parts(a)
    bd, bi, bt = _parts(b)
    try:
        out = ad * bd
    except ValueError:
        raise ShapeError("multiply_elementwise", ad.shape, bd.shape) from None
    tape = _tape_of((ai, at), (bi, bt))
    return _emit(tape, "multiply_elementwise", (ai, bi), (ad, bd), out)


def matmul(a, b) -> Tensor:
    ad, ai, at = _parts(a)
    bd, bi, bt = _parts(b)
    ok = (
        (ad.ndim == 2 and bd.ndim in (1, 2) and ad.shape[1] == bd.shape[0])
        or (ad.ndim == 1 and bd.ndim == 2 and ad.shape[0] == bd.shape[0])
    )
    if not ok:
        raise ShapeError("matmul", ad.shape, bd.shape)
    out = ad @ bd
    tape = _tape_of((ai, at), (bi, bt))
    return _emit(tape, "matmul", (ai, bi), (ad, bd), out)


def concat(tensors: Sequence) -> Tensor:
    """Concatenate 1-D tensors (scalars are lifted to length-1 vectors)."""
    parts = [_parts(t) for t in tensors]
    for d, _, _ in parts:
        if d.ndim > 1:
            raise ShapeError("concat", *[p[0].shape for p in parts])
    datas = [d.reshape(-1) for d, _, _ in parts]
    out = np.concatenate(datas) if datas else np.zeros(0)
    tape = _tape_of(*[(nid, tp) for _, nid, tp in parts])
    ids = tuple(nid for _, nid, tp in parts)
    shapes = tuple(d.shape for d, _, _ in parts)
    return _emit(tape, "concat", ids, (shapes,), out)


def reduce_sum(x, axis: int | None = None) -> Tensor:
    xd, xi, xt = _parts(x)
    if axis not in (None, 0):
        raise ValueError("sum: only axis None (all) or 0 is supported")
    out = xd.sum(axis=axis)
    return _emit(_tape_of((xi, xt)), "sum", (xi,), (xd.shape,), out)


def sigmoid(x) -> Tensor:
    xd, xi, xt = _parts(x)
    out = expit(xd)
    return _emit(_tape_of((xi, xt)), "sigmoid", (xi,), (out,), out)


def tanh(x) -> Tensor:
    xd, xi, xt = _parts(x)
    out = np.tanh(xd)
    return _emit(_tape_of((xi, xt)), "tanh", (xi,), (out,), out)


def relu(x) -> Tensor:
    xd, xi, xt = _parts(x)
    out = np.maximum(xd, 0.0)
    return _emit(_tape_of((xi, xt)), "relu", (xi,), (xd,), out)


def softmax(x) -> Tensor:
    """Stable softmax over a 1-D vector (max subtraction)."""
    xd, xi, xt = _parts(x)
    if xd.ndim != 1:
        raise ShapeError("softmax", xd.shape)
    e = np.exp(xd - xd.max())
    out = e / e.sum()
    return _emit(_tape_of((xi, xt)), "softmax", (xi,), (out,), out)


def dot(a, b) -> Tensor:
    ad, ai, at = _parts(a)
    bd, bi, bt = _parts(b)
    if ad.ndim != 1 or bd.ndim != 1 or ad.shape != bd.shape:
        raise ShapeError("dot", ad.shape, bd.shape)
    out = np.asarray(ad @ bd)
    tape = _tape_of((ai, at), (bi, bt))
    return _emit(tape, "dot", (ai, bi), (ad, bd), out)


def log(x) -> Tensor:
    xd, xi, xt = _parts(x)
    out = np.log(xd)
    return _emit(_tape_of((xi, xt)), "log", (xi,), (xd,), out)


def clamp(x, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only through the interior."""
    xd, xi, xt = _parts(x)
    out = np.clip(xd, lo, hi)
    mask = (xd > lo) & (xd < hi)
    return _emit(_tape_of((xi, xt)), "clamp", (xi,), (mask,), out)


def embedding_lookup(table, indices) -> Tensor:
    """Gather rows of a (V, d) table; indices is an int or int array."""
    td, ti, tt = _parts(table)
    if td.ndim != 2:
        raise ShapeError("embedding_lookup", td.shape)
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= td.shape[0]):
        raise IndexError(
            f"embedding_lookup: index out of range for table with {td.shape[0]} rows"
        )
    out = td[idx]
    return _emit(_tape_of((ti, tt)), "embedding_lookup", (ti,), (idx, td.shape), out)


def dropout_mask_apply(x, mask: np.ndarray) -> Tensor:
    """Multiply by a precomputed dropout mask (0 or 1/keep entries)."""
    xd, xi, xt = _parts(x)
    if np.shape(mask) != xd.shape:
        raise ShapeError("dropout_mask_apply", xd.shape, np.shape(mask))
    out = xd * mask
    return _emit(_tape_of((xi, xt)), "dropout_mask_apply", (xi,), (mask,), out)


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    xd, xi, xt = _parts(x)
    if prod(shape) != xd.size:
        raise ShapeError("reshape", xd.shape, shape)
    out = xd.reshape(shape)
    return _emit(_tape_of((xi, xt)), "reshape", (xi,), (xd.shape,), out)


def transpose(x) -> Tensor:
    xd, xi, xt = _parts(x)
    if xd.ndim != 2:
        raise ShapeError("transpose", xd.shape)
    return _emit(_tape_of((xi, xt)), "transpose", (xi,), (), xd.T)


FORWARD_OPS = {
    "add": add,
    "multiply_elementwise": multiply_elementwise,
    "matmul": matmul,
    "concat": concat,
    "sum": reduce_sum,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "softmax": softmax,
    "dot": dot,
    "embedding_lookup": embedding_lookup,
    "dropout_mask_apply": dropout_mask_apply,
    "log": log,
    "clamp": clamp,
    "relu": relu,
    "reshape": reshape,
    "transpose": transpose,
}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    """Apply one of the registered op kinds by name."""
    try:
        fn = FORWARD_OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# backward rules, one per kind


def _bk_add(ids, saved, g, acc):
    ashape, bshape = saved
    acc(ids[0], _unbroadcast(g, ashape))
    acc(ids[1], _unbroadcast(g, bshape))


def _bk_mul(ids, saved, g, acc):
    ad, bd = saved
    if ids[0] is not None:
        acc(ids[0], _unbroadcast(g * bd, ad.shape))
    if ids[1] is not None:
        acc(ids[1], _unbroadcast(g * ad, bd.shape))


def _bk_matmul(ids, saved, g, acc):
    ad, bd = saved
    if ad.ndim == 2 and bd.ndim == 1:
        if ids[0] is not None:
            acc(ids[0], np.outer(g, bd))
        if ids[1] is not None:
            acc(ids[1], ad.T @ g)
    elif ad.ndim == 2 and bd.ndim == 2:
        if ids[0] is not None:
            acc(ids[0], g @ bd.T)
        if ids[1] is not None:
            acc(ids[1], ad.T @ g)
    else:  # (n,) @ (n,p)
        if ids[0] is not None:
            acc(ids[0], bd @ g)
        if ids[1] is not None:
            acc(ids[1], np.outer(ad, g))


def _bk_concat(ids, saved, g, acc):
    (shapes,) = saved
    off = 0
    for nid, shape in zip(ids, shapes):
        n = prod(shape)
        if nid is not None:
            acc(nid, g[off : off + n].reshape(shape))
        off += n


def _bk_sum(ids, saved, g, acc):
    (xshape,) = saved
    acc(ids[0], np.broadcast_to(g, xshape))


def _bk_sigmoid(ids, saved, g, acc):
    (out,) = saved
    acc(ids[0], g * out * (1.0 - out))


def _bk_tanh(ids, saved, g, acc):
    (out,) = saved
    acc(ids[0], g * (1.0 - out * out))


def _bk_relu(ids, saved, g, acc):
    (xd,) = saved
    acc(ids[0], g * (xd > 0.0))


def _bk_softmax(ids, saved, g, acc):
    (out,) = saved
    acc(ids[0], out * (g - np.dot(g, out)))


def _bk_dot(ids, saved, g, acc):
    ad, bd = saved
    if ids[0] is not None:
        acc(ids[0], g * bd)
    if ids[1] is not None:
        acc(ids[1], g * ad)


def _bk_log(ids, saved, g, acc):
    (xd,) = saved
    acc(ids[0], g / xd)


def _bk_clamp(ids, saved, g, acc):
    (mask,) = saved
    acc(ids[0], g * mask)


def _bk_lookup(ids, saved, g, acc):
    idx, tshape = saved
    gt = np.zeros(tshape)
    np.add.at(gt, idx, g)
    acc(ids[0], gt)


def _bk_dropout(ids, saved, g, acc):
    (mask,) = saved
    acc(ids[0], g * mask)


def _bk_reshape(ids, saved, g, acc):
    (xshape,) = saved
    acc(ids[0], g.reshape(xshape))


def _bk_transpose(ids, saved, g, acc):
    acc(ids[0], g.T)


_BACKWARD = {
    "add": _bk_add,
    "multiply_elementwise": _bk_mul,
    "matmul": _bk_matmul,
    "concat": _bk_concat,
    "sum": _bk_sum,
    "sigmoid": _bk_sigmoid,
    "tanh": _bk_tanh,
    "softmax": _bk_softmax,
    "relu": _bk_relu,
    "dot": _bk_dot,
    "log": _bk_log,
    "clamp": _bk_clamp,
    "embedding_lookup": _bk_lookup,
    "dropout_mask_apply": _bk_dropout,
    "reshape": _bk_reshape,
    "transpose": _bk_transpose,
}


def backward(tape: Tape, root: Tensor) -> dict[int, np.ndarray]:
    """Reverse sweep from a scalar root; returns gradients per leaf node id.

    Leaves the root does not depend on get explicit zero gradients.
    """
    if root.tape is not tape or root.node_id is None:
        raise ValueError("backward: root is not tracked on this tape")
    if root.data.shape != ():
        raise ValueError(f"backward: root must be a scalar, got shape {root.data.shape}")
    nodes = tape.nodes
    grads: list = [None] * len(nodes)
    grads[root.node_id] = np.ones(())

    def acc(nid, g):
        if nid is None:
            return
        cur = grads[nid]
        grads[nid] = g if cur is None else cur + g

    rules = _BACKWARD
    for nid in range(root.node_id, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        kind, ids, saved = nodes[nid]
        if kind == "leaf":
            continue
        rules[kind](ids, saved, g, acc)

    tape.gradients = grads
    out = {}
    for nid in tape.leaf_ids:
        g = grads[nid]
        if g is None:
            (shape,) = nodes[nid][2]
            g = np.zeros(shape)
        out[nid] = g
    return out
