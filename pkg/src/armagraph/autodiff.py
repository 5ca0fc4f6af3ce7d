"""Minimal reverse-mode differentiation over dense arrays with sparse constants.

A Tape records each forward op (kind, inputs, saved context, value); one
backward pass per tape walks the records in reverse and accumulates into
Parameter gradients. Graph operators enter only as constants of spmm, so
no gradients flow to the graph itself. No broadcasting: shapes must match
exactly, and biases use the dedicated row-vector add.
"""

import os

import numpy as np

from armagraph.sparse import CsrMatrix, as_dense, spmm

ACTIVATIONS = ("identity", "relu", "sigmoid")


class Parameter:
    """Named trainable array with an accumulated gradient of the same shape."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value):
        self.name = name
        self.value = as_dense(value)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[:] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Node:
    """Handle to one recorded value on a tape."""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape, index, value):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Append-only record of forward ops; supports exactly one backward pass."""

    def __init__(self):
        self._records = []
        self._spent = False

    def _push(self, kind, inputs, ctx, value, param=None) -> Node:
        self._records.append((kind, tuple(n.index for n in inputs), ctx, value, param))
        return Node(self, len(self._records) - 1, value)

    def _check_same_tape(self, *nodes):
        for n in nodes:
            if n.tape is not self:
                raise ValueError("node belongs to a different tape")

    # ---- leaves ----

    def leaf(self, value) -> Node:
        return self._push("leaf", (), None, as_dense(value))

    def param(self, p: Parameter) -> Node:
        return self._push("param", (), None, p.value, param=p)

    # ---- recorded ops ----

    def matmul(self, a: Node, b: Node) -> Node:
        self._check_same_tape(a, b)
        if a.value.shape[1] != b.value.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        return self._push("matmul", (a, b), None, a.value @ b.value)

    def spmm(self, s: CsrMatrix, x: Node) -> Node:
        """Product with a constant sparse operator; gradient flows to x only."""
        self._check_same_tape(x)
        return self._push("spmm", (x,), s, spmm(s, x.value))

    def add(self, a: Node, b: Node) -> Node:
        self._check_same_tape(a, b)
        if a.value.shape != b.value.shape:
            raise ValueError(f"add shape mismatch: {a.shape} + {b.shape}")
        return self._push("add", (a, b), None, a.value + b.value)

    def add_bias(self, a: Node, bias: Node) -> Node:
        """Add a 1 x F row vector to every row of a (the only replicated add)."""
        self._check_same_tape(a, bias)
        if bias.value.shape != (1, a.value.shape[1]):
            raise ValueError(f"bias shape {bias.shape} does not match {a.shape}")
        return self._push("add_bias", (a, bias), None, a.value + bias.value)

    def scale(self, a: Node, c: float) -> Node:
        self._check_same_tape(a)
        c = float(c)
        return self._push("scale", (a,), c, a.value * c)

    def activation(self, a: Node, kind: str) -> Node:
        self._check_same_tape(a)
        if kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation {kind!r}")
        if kind == "identity":
            value, ctx = a.value, None
        elif kind == "relu":
            value = np.maximum(a.value, 0.0)
            ctx = a.value > 0.0
        else:
            value = 1.0 / (1.0 + np.exp(-a.value))
            ctx = value
        return self._push("activation", (a,), (kind, ctx), value)

    def dropout(self, a: Node, rate: float, training: bool, rng=None) -> Node:
        """Inverted dropout: scales kept entries by 1/(1-rate); identity in eval mode."""
        self._check_same_tape(a)
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        if not training or rate == 0.0:
            return self._push("dropout", (a,), None, a.value)
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        mask = (rng.random(a.value.shape) >= rate) / (1.0 - rate)
        return self._push("dropout", (a,), mask, a.value * mask)

    def row_mean(self, a: Node) -> Node:
        self._check_same_tape(a)
        return self._push("row_mean", (a,), a.value.shape[0], a.value.mean(axis=0, keepdims=True))

    def segment_mean(self, a: Node, boundaries) -> Node:
        """Per-segment row means; boundaries[b]..boundaries[b+1] delimit segment b."""
        self._check_same_tape(a)
        bounds = np.asarray(boundaries, dtype=np.int64)
        if bounds[0] != 0 or bounds[-1] != a.value.shape[0] or np.any(np.diff(bounds) <= 0):
            raise ValueError("segment boundaries must start at 0, end at n_rows, and increase")
        value = np.add.reduceat(a.value, bounds[:-1], axis=0) / np.diff(bounds)[:, None]
        return self._push("segment_mean", (a,), bounds, value)

    def masked_softmax_xent(self, logits: Node, labels, mask=None) -> Node:
        """Mean cross-entropy of row-softmax over the masked rows; scalar 1x1."""
        self._check_same_tape(logits)
        labels = np.asarray(labels, dtype=np.int64)
        n, c = logits.value.shape
        if labels.shape != (n,):
            raise ValueError("labels must have one entry per row")
        if labels.size and (labels.min() < 0 or labels.max() >= c):
            raise ValueError("label out of range")
        mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        count = int(mask.sum())
        if count == 0:
            raise ValueError("mask selects no rows")
        shifted = logits.value - logits.value.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logz
        loss = -logp[mask, labels[mask]].mean()
        probs = np.exp(logp)
        return self._push(
            "softmax_xent", (logits,), (probs, labels, mask, count), np.array([[loss]])
        )

    def mse(self, pred: Node, target) -> Node:
        """Mean squared error over all entries; scalar 1x1."""
        self._check_same_tape(pred)
        target = as_dense(target)
        if target.shape != pred.value.shape:
            raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
        diff = pred.value - target
        return self._push("mse", (pred,), diff, np.array([[np.mean(diff**2)]]))

    def l2_penalty(self, param_nodes, weight: float) -> Node:
        """weight * sum of half squared Frobenius norms; scalar 1x1."""
        self._check_same_tape(*param_nodes)
        weight = float(weight)
        total = sum(float(np.sum(n.value**2)) for n in param_nodes)
        return self._push(
            "l2_penalty", tuple(param_nodes), weight, np.array([[0.5 * weight * total]])
        )

    # ---- reverse pass ----

    def backward(self, loss: Node):
        """Fill Parameter gradients with d(loss)/d(param); one pass per tape."""
        self._check_same_tape(loss)
        if loss.value.shape != (1, 1):
            raise ValueError(f"loss must be scalar-shaped (1, 1), got {loss.value.shape}")
        if self._spent:
            raise RuntimeError("tape already consumed by a backward pass; rebuild the forward")
        self._spent = True
        corrupt = os.environ.get("ARMAGRAPH_CORRUPT_BACKWARD", "")
        grads = [None] * len(self._records)
        grads[loss.index] = np.ones((1, 1))
        for idx in range(loss.index, -1, -1):
            up = grads[idx]
            if up is None:
                continue
            kind, inputs, ctx, value, param = self._records[idx]
            if param is not None:
                param.grad += up
                continue
            if not inputs:
                continue
            input_grads = _VJP[kind](up, ctx, [self._records[i][3] for i in inputs], value)
            if kind == corrupt:
                input_grads = [g * 1.01 if g is not None else None for g in input_grads]
            for i, g in zip(inputs, input_grads):
                if g is None:
                    continue
                if grads[i] is None:
                    grads[i] = g.copy()
                else:
                    grads[i] += g


def _vjp_matmul(up, ctx, ins, value):
    a, b = ins
    return [up @ b.T, a.T @ up]


def _vjp_spmm(up, s, ins, value):
    return [spmm(s.transpose(), up)]


def _vjp_add(up, ctx, ins, value):
    return [up, up]


def _vjp_add_bias(up, ctx, ins, value):
    return [up, up.sum(axis=0, keepdims=True)]


def _vjp_scale(up, c, ins, value):
    return [up * c]


def _vjp_activation(up, ctx, ins, value):
    kind, saved = ctx
    if kind == "identity":
        return [up]
    if kind == "relu":
        return [up * saved]
    return [up * saved * (1.0 - saved)]


def _vjp_dropout(up, mask, ins, value):
    return [up if mask is None else up * mask]


def _vjp_row_mean(up, n_rows, ins, value):
    return [np.repeat(up / n_rows, n_rows, axis=0)]


def _vjp_segment_mean(up, bounds, ins, value):
    sizes = np.diff(bounds)
    return [np.repeat(up / sizes[:, None], sizes, axis=0)]


def _vjp_softmax_xent(up, ctx, ins, value):
    probs, labels, mask, count = ctx
    g = probs.copy()
    g[np.arange(len(labels)), labels] -= 1.0
    g *= mask[:, None] / count
    return [g * up[0, 0]]


def _vjp_mse(up, diff, ins, value):
    return [(2.0 / diff.size) * diff * up[0, 0]]


def _vjp_l2(up, weight, ins, value):
    return [weight * v * up[0, 0] for v in ins]


_VJP = {
    "matmul": _vjp_matmul,
    "spmm": _vjp_spmm,
    "add": _vjp_add,
    "add_bias": _vjp_add_bias,
    "scale": _vjp_scale,
    "activation": _vjp_activation,
    "dropout": _vjp_dropout,
    "row_mean": _vjp_row_mean,
    "segment_mean": _vjp_segment_mean,
    "softmax_xent": _vjp_softmax_xent,
    "mse": _vjp_mse,
    "l2_penalty": _vjp_l2,
}


def grad_check(build_fn, params, epsilon: float = 1e-5, max_coords: int = 50, seed: int = 0):
    """Max relative error between tape gradients and central finite differences.

    ``build_fn`` must rebuild the scalar loss node from scratch on each call
    and be deterministic (dropout off or identically seeded). At least
    ``max_coords`` coordinates per parameter are probed (all of them for
    small parameters). The error denominator is
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError("epsilon must lie in [1e-7, 1e-4]")
    from armagraph.rng import make_rng

    rng = make_rng(seed)
    for p in params:
        p.zero_grad()
    loss = build_fn()
    loss.tape.backward(loss)
    analytic = {p.name: p.grad.copy() for p in params}

    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        size = flat.size
        if size <= max_coords:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + epsilon
            f_plus = build_fn().value[0, 0]
            flat[c] = orig - epsilon
            f_minus = build_fn().value[0, 0]
            flat[c] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            a = analytic[p.name].reshape(-1)[c]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
