"""Dense-matrix reverse-mode automatic differentiation on a flat tape.

Everything is a 2-D float64 numpy array. The op set is deliberately tiny
(nine kinds); recurrent cells are composed from these ops so that one
finite-difference check covers the whole network.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tape", "Adam", "DimensionError", "sigmoid", "OP_KINDS"]

OP_KINDS = (
    "matmul",
    "add",
    "hadamard",
    "sigmoid",
    "tanh",
    "concat_rows",
    "slice_rows",
    "scalar_mul",
    "sum_squares",
)


class DimensionError(ValueError):
    """Shape mismatch at op-record time."""


def sigmoid(x):
    # exp overflow for very negative x saturates to 0, which is correct
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _as_matrix(value, what):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{what}: expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what}: non-finite entries")
    return arr


class _Node:
    __slots__ = ("idx", "op", "inputs", "value", "extra")

    def __init__(self, idx, op, inputs, value, extra=None):
        self.idx = idx
        self.op = op
        self.inputs = inputs
        self.value = value
        self.extra = extra


class Tape:
    """Topologically ordered record of one forward computation.

    Leaf nodes are ``param`` (tracked, gradients returned) and ``const``
    (untracked). Compute nodes cache their forward value at record time;
    ``backward`` walks the list in reverse. Param nodes alias the caller's
    arrays, so ``replay`` after an in-place parameter change re-evaluates
    the same graph at the new point.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.param_ids: list[int] = []

    # -- leaves ------------------------------------------------------------

    def param(self, value) -> int:
        arr = _as_matrix(value, "param")
        nid = self._append("param", (), arr)
        self.param_ids.append(nid)
        return nid

    def const(self, value) -> int:
        return self._append("const", (), _as_matrix(value, "const"))

    # -- ops ----------------------------------------------------------------

    def matmul(self, a: int, b: int) -> int:
        va, vb = self._val(a), self._val(b)
        if va.shape[1] != vb.shape[0]:
            raise DimensionError(f"matmul: {_fmt(va)} @ {_fmt(vb)}")
        return self._append("matmul", (a, b), va @ vb)

    def add(self, a: int, b: int) -> int:
        """Elementwise sum; the second operand may be an (n, 1) bias column."""
        va, vb = self._val(a), self._val(b)
        if va.shape != vb.shape and not (
            vb.shape == (va.shape[0], 1) and va.shape[1] >= 1
        ):
            raise DimensionError(f"add: {_fmt(va)} + {_fmt(vb)}")
        return self._append("add", (a, b), va + vb)

    def hadamard(self, a: int, b: int) -> int:
        va, vb = self._val(a), self._val(b)
        if va.shape != vb.shape:
            raise DimensionError(f"hadamard: {_fmt(va)} * {_fmt(vb)}")
        return self._append("hadamard", (a, b), va * vb)

    def sigmoid(self, a: int) -> int:
        return self._append("sigmoid", (a,), sigmoid(self._val(a)))

    def tanh(self, a: int) -> int:
        return self._append("tanh", (a,), np.tanh(self._val(a)))

    def concat_rows(self, a: int, b: int) -> int:
        va, vb = self._val(a), self._val(b)
        if va.shape[1] != vb.shape[1]:
            raise DimensionError(f"concat_rows: {_fmt(va)} over {_fmt(vb)}")
        return self._append("concat_rows", (a, b), np.vstack((va, vb)))

    def slice_rows(self, a: int, r0: int, r1: int) -> int:
        va = self._val(a)
        if not (0 <= r0 < r1 <= va.shape[0]):
            raise DimensionError(f"slice_rows: rows [{r0}:{r1}] of {_fmt(va)}")
        return self._append("slice_rows", (a,), va[r0:r1].copy(), extra=(r0, r1))

    def scalar_mul(self, a: int, c: float) -> int:
        c = float(c)
        if not np.isfinite(c):
            raise ValueError("scalar_mul: non-finite scalar")
        return self._append("scalar_mul", (a,), c * self._val(a), extra=c)

    def sum_squares(self, a: int) -> int:
        va = self._val(a)
        return self._append("sum_squares", (a,), np.array([[np.sum(va * va)]]))

    # -- evaluation ----------------------------------------------------------

    def value(self, nid: int) -> np.ndarray:
        return self.nodes[nid].value

    def replay(self) -> None:
        """Recompute every cached value in insertion order from current leaves."""
        for node in self.nodes:
            if node.op in ("param", "const"):
                continue
            ins = [self.nodes[i].value for i in node.inputs]
            node.value = _FORWARD[node.op](ins, node.extra)

    def backward(self, loss: int) -> dict[int, np.ndarray]:
        """Return d(loss)/d(param) for every param node.

        The loss node must be scalar (1x1). Gradients of non-parameter
        nodes are used internally and discarded.
        """
        lval = self.nodes[loss].value
        if lval.shape != (1, 1):
            raise ValueError(f"backward: loss must be 1x1, got {_fmt(lval)}")
        grads: list = [None] * len(self.nodes)
        grads[loss] = np.ones((1, 1))
        for node in reversed(self.nodes[: loss + 1]):
            g = grads[node.idx]
            if g is None or node.op in ("param", "const"):
                continue
            for inp, contrib in _backward(node, g, self.nodes):
                # fresh allocation on accumulate; stored grads and views of
                # upstream grads are never mutated in place
                grads[inp] = contrib if grads[inp] is None else grads[inp] + contrib
        out = {}
        for pid in self.param_ids:
            g = grads[pid]
            out[pid] = np.zeros_like(self.nodes[pid].value) if g is None else g
        return out

    # -- internals -----------------------------------------------------------

    def _append(self, op, inputs, value, extra=None) -> int:
        nid = len(self.nodes)
        self.nodes.append(_Node(nid, op, inputs, value, extra))
        return nid

    def _val(self, nid: int) -> np.ndarray:
        return self.nodes[nid].value


def _fmt(arr):
    return f"({arr.shape[0]}x{arr.shape[1]})"


_FORWARD = {
    "matmul": lambda ins, _: ins[0] @ ins[1],
    "add": lambda ins, _: ins[0] + ins[1],
    "hadamard": lambda ins, _: ins[0] * ins[1],
    "sigmoid": lambda ins, _: sigmoid(ins[0]),
    "tanh": lambda ins, _: np.tanh(ins[0]),
    "concat_rows": lambda ins, _: np.vstack((ins[0], ins[1])),
    "slice_rows": lambda ins, ex: ins[0][ex[0] : ex[1]].copy(),
    "scalar_mul": lambda ins, c: c * ins[0],
    "sum_squares": lambda ins, _: np.array([[np.sum(ins[0] * ins[0])]]),
}


def _backward(node, g, nodes):
    op = node.op
    if op == "matmul":
        a, b = node.inputs
        yield a, g @ nodes[b].value.T
        yield b, nodes[a].value.T @ g
    elif op == "add":
        a, b = node.inputs
        yield a, g
        if nodes[b].value.shape == g.shape:
            yield b, g
        else:  # bias column broadcast over batch columns
            yield b, g.sum(axis=1, keepdims=True)
    elif op == "hadamard":
        a, b = node.inputs
        yield a, g * nodes[b].value
        yield b, g * nodes[a].value
    elif op == "sigmoid":
        y = node.value
        yield node.inputs[0], g * y * (1.0 - y)
    elif op == "tanh":
        y = node.value
        yield node.inputs[0], g * (1.0 - y * y)
    elif op == "concat_rows":
        a, b = node.inputs
        ra = nodes[a].value.shape[0]
        yield a, g[:ra]
        yield b, g[ra:]
    elif op == "slice_rows":
        r0, r1 = node.extra
        da = np.zeros_like(nodes[node.inputs[0]].value)
        da[r0:r1] = g
        yield node.inputs[0], da
    elif op == "scalar_mul":
        yield node.inputs[0], node.extra * g
    elif op == "sum_squares":
        yield node.inputs[0], (2.0 * g[0, 0]) * nodes[node.inputs[0]].value
    else:  # pragma: no cover
        raise AssertionError(f"unknown op {op}")


class Adam:
    """Adam with bias correction, updating parameter arrays in place.

    Defaults: lr 1e-3, beta1 0.9, beta2 0.999, eps 1e-8.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads) -> None:
        for name, g in grads.items():
            if np.isnan(g).any():
                raise RuntimeError(f"adam: NaN gradient in parameter block '{name}'")
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (self.lr / b1t) * m / (np.sqrt(v / b2t) + self.eps)
            self.params[name] -= update
