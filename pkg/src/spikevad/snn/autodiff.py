"""A small reverse-mode tape covering the operations the MSF head needs.

Every operation on a :class:`Var` appends one record to its tape; the
reverse sweep walks those records once, newest first, and accumulates
cotangents. Spiking nonlinearities record their pre-reset potentials so
the backward pass can apply the surrogate derivative.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import conv, neurons


class TapeError(RuntimeError):
    pass


class Tape:
    """Records forward operations for one backward pass.

    ``smooth_spikes`` makes LIF layers emit ``sigmoid(beta * (u - v_th))``
    instead of binary spikes, which turns the whole forward into the smooth
    function whose exact gradient the backward pass computes.
    """

    def __init__(self, smooth_spikes: bool = False):
        self.smooth_spikes = smooth_spikes
        self.records: list[tuple["Var", tuple["Var", ...], Callable]] = []
        self.params: dict[str, "Var"] = {}
        self.consumed = False

    def param(self, name: str, value) -> "Var":
        if name in self.params:
            raise TapeError(f"parameter {name!r} registered twice")
        v = Var(np.asarray(value, dtype=np.float64), self, requires_grad=True, name=name)
        self.params[name] = v
        return v

    def const(self, value) -> "Var":
        return Var(np.asarray(value, dtype=np.float64), self)

    def record(self, value, parents: Sequence["Var"], vjp: Callable) -> "Var":
        if self.consumed:
            raise TapeError("tape already consumed by backward")
        needs = any(p.requires_grad for p in parents)
        out = Var(value, self, requires_grad=needs)
        if needs:
            self.records.append((out, tuple(parents), vjp))
        return out


class Var:
    __slots__ = ("value", "tape", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, value, tape: Tape, requires_grad: bool = False, name: str | None = None):
        self.value = value
        self.tape = tape
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return take(self, idx)


def as_var(x, tape: Tape | None = None) -> Var:
    """Wrap ``x`` as a constant; a fresh tape is used when none is given."""
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=np.float64), tape if tape is not None else Tape())


def _tape_of(*xs) -> Tape | None:
    vs = [x for x in xs if isinstance(x, Var)]
    for v in vs:
        if v.requires_grad:
            return v.tape
    return vs[0].tape if vs else None


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _record(value, parents, vjp):
    tape = _tape_of(*parents)
    parents = [as_var(p, tape) for p in parents]
    return (tape or parents[0].tape).record(value, parents, vjp)


def add(a, b) -> Var:
    a_, b_ = as_var(a, _tape_of(a, b)), as_var(b, _tape_of(a, b))
    sa, sb = a_.value.shape, b_.value.shape
    return _record(a_.value + b_.value, [a_, b_],
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a, b) -> Var:
    a_, b_ = as_var(a, _tape_of(a, b)), as_var(b, _tape_of(a, b))
    av, bv = a_.value, b_.value
    return _record(av * bv, [a_, b_],
                   lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def matmul(a, b) -> Var:
    a_, b_ = as_var(a, _tape_of(a, b)), as_var(b, _tape_of(a, b))
    av, bv = a_.value, b_.value

    def vjp(g):
        ga = g @ np.swapaxes(bv, -1, -2) if bv.ndim > 1 else np.multiply.outer(g, bv)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _record(av @ bv, [a_, b_], vjp)


def transpose(a: Var) -> Var:
    return _record(np.swapaxes(a.value, -1, -2), [a], lambda g: (np.swapaxes(g, -1, -2),))


def reshape(a: Var, shape) -> Var:
    old = a.value.shape
    return _record(a.value.reshape(shape), [a], lambda g: (g.reshape(old),))


def take(a: Var, idx) -> Var:
    shape = a.value.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _record(a.value[idx], [a], vjp)


def concat(xs: Sequence[Var], axis: int = -1) -> Var:
    sizes = [x.value.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    return _record(np.concatenate([x.value for x in xs], axis=axis), list(xs),
                   lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(xs: Sequence[Var], axis: int = 0) -> Var:
    n = len(xs)
    return _record(np.stack([x.value for x in xs], axis=axis), list(xs),
                   lambda g: tuple(np.moveaxis(g, axis, 0)[i] for i in range(n)))


def sum(a: Var, axis=None, keepdims: bool = False) -> Var:  # noqa: A001
    shape = a.value.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(np.sum(a.value, axis=axis, keepdims=keepdims), [a], vjp)


def mean(a: Var, axis=None) -> Var:
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / n)


def log(a: Var) -> Var:
    av = a.value
    return _record(np.log(av), [a], lambda g: (g / av,))


def clip(a: Var, lo: float, hi: float) -> Var:
    av = a.value
    inside = ((av >= lo) & (av <= hi)).astype(np.float64)
    return _record(np.clip(av, lo, hi), [a], lambda g: (g * inside,))


def sigmoid(a: Var) -> Var:
    s = neurons.sigmoid(a.value)
    return _record(s, [a], lambda g: (g * s * (1.0 - s),))


def softmax(a: Var, axis: int = -1) -> Var:
    z = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return _record(y, [a], lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def cosine_similarity(a: Var) -> Var:
    """Row-wise cosine similarity ``[..., t, c] -> [..., t, t]``; zero rows give 0."""
    x = a.value
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    unit = np.where(norms > 0, x / safe, 0.0)

    def vjp(g):
        g_unit = (g + np.swapaxes(g, -1, -2)) @ unit
        radial = (g_unit * unit).sum(axis=-1, keepdims=True)
        return (np.where(norms > 0, (g_unit - unit * radial) / safe, 0.0),)

    return _record(unit @ np.swapaxes(unit, -1, -2), [a], vjp)


def dilated_conv1d(x: Var, kernel: Var, dilation: int) -> Var:
    xv, kv = x.value, kernel.value
    return _record(conv.dilated_conv1d(xv, kv, dilation), [x, kernel],
                   lambda g: conv.dilated_conv1d_vjp(g, xv, kv, dilation))


def depthwise_conv1d(x: Var, kernel: Var) -> Var:
    xv, kv = x.value, kernel.value
    return _record(conv.depthwise_conv1d(xv, kv), [x, kernel],
                   lambda g: conv.depthwise_conv1d_vjp(g, xv, kv))


def lif(x: Var, tau: float, v_th: float, beta: float = neurons.DEFAULT_BETA) -> Var:
    """LIF neurons integrating along axis 0 (the simulation-step axis)."""
    x = as_var(x)
    spikes, charged, hard = neurons.lif_forward_trace(
        x.value, tau, v_th, beta, smooth=x.tape.smooth_spikes)
    return _record(spikes, [x],
                   lambda g: (neurons.lif_backward(g, charged, hard, tau, v_th, beta),))


def backward(tape: Tape, loss: Var) -> dict[str, np.ndarray]:
    """Reverse sweep from a scalar ``loss``; returns a gradient per parameter.

    Parameters that do not influence the loss get a zero gradient. A tape
    can be swept only once.
    """
    if tape.consumed:
        raise TapeError("tape already consumed by backward")
    if loss.tape is not tape:
        raise TapeError("loss was not recorded on this tape")
    if np.size(loss.value) != 1:
        raise TapeError(f"loss must be scalar, got shape {np.shape(loss.value)}")
    tape.consumed = True
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for out, parents, vjp in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for parent, pg in zip(parents, vjp(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.asarray(pg, dtype=np.float64)
    return {name: grads.get(id(v), np.zeros_like(v.value)).reshape(v.value.shape)
            for name, v in tape.params.items()}
