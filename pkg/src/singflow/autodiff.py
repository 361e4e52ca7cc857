"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A DiffTape records ops in execution order; backward() replays the recorded
local-gradient rules in reverse, which also fixes the floating-point
accumulation order, so repeated backward passes over identical tapes are
bitwise identical. Values are numpy arrays (scalars are 0-d arrays); only
scalar broadcasting is supported, plus a fused affine op whose bias follows
row broadcasting with a matching sum in the adjoint.

Gradients flow only out of leaf nodes: constants (data, base samples, masks)
are never given adjoints, which keeps the backward pass off the large data
arrays.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import kernels


class ShapeMismatchError(ValueError):
    pass


class DiffNode:
    __slots__ = ("value", "adjoint", "op", "parents", "ctx", "tape", "idx",
                 "requires_grad")

    def __init__(self, tape: "DiffTape", value: np.ndarray, op: str,
                 parents: tuple, ctx):
        self.tape = tape
        self.value = value
        self.adjoint = None
        self.op = op
        self.parents = parents
        self.ctx = ctx
        self.requires_grad = (op == "leaf") or any(p.requires_grad for p in parents)
        self.idx = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    # expression sugar; plain numbers/arrays on either side become constants
    def __add__(self, other):
        return add(self, _lift(self.tape, other))

    def __sub__(self, other):
        return sub(self, _lift(self.tape, other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return smul(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return smul(self, float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class DiffTape:
    """Ordered record of operations; operands always precede their consumers."""

    def __init__(self):
        self.nodes: list[DiffNode] = []

    def constant(self, value) -> DiffNode:
        return DiffNode(self, _as_array(value), "const", (), None)

    def leaf(self, value) -> DiffNode:
        return DiffNode(self, _as_array(value), "leaf", (), None)


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


def _lift(tape: DiffTape, other) -> DiffNode:
    if isinstance(other, DiffNode):
        return other
    return tape.constant(other)


def _check_elementwise(op: str, a: DiffNode, b: DiffNode) -> None:
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeMismatchError(
            f"{op}: shapes {a.shape} and {b.shape} neither match nor scalar-broadcast"
        )


def _accum(node: DiffNode, contribution: np.ndarray, fresh: bool = False) -> None:
    """Add a vjp contribution; fresh arrays are adopted without a copy."""
    if not node.requires_grad:
        return
    if node.adjoint is None:
        if contribution.shape == node.value.shape:
            node.adjoint = contribution if fresh else contribution.copy()
        else:  # scalar operand fed into an elementwise op
            node.adjoint = np.zeros_like(node.value)
            node.adjoint += contribution.sum()
    elif contribution.shape == node.adjoint.shape:
        node.adjoint += contribution
    else:
        node.adjoint += contribution.sum()


# --- op constructors ---------------------------------------------------------

def matmul(a: DiffNode, b: DiffNode) -> DiffNode:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return DiffNode(a.tape, a.value @ b.value, "matmul", (a, b), None)


def add(a: DiffNode, b: DiffNode) -> DiffNode:
    _check_elementwise("add", a, b)
    return DiffNode(a.tape, a.value + b.value, "add", (a, b), None)


def sub(a: DiffNode, b: DiffNode) -> DiffNode:
    _check_elementwise("sub", a, b)
    return DiffNode(a.tape, a.value - b.value, "sub", (a, b), None)


def mul(a: DiffNode, b: DiffNode) -> DiffNode:
    _check_elementwise("mul", a, b)
    return DiffNode(a.tape, a.value * b.value, "mul", (a, b), None)


def smul(a: DiffNode, c: float) -> DiffNode:
    return DiffNode(a.tape, a.value * c, "smul", (a,), c)


def neg(a: DiffNode) -> DiffNode:
    return DiffNode(a.tape, -a.value, "neg", (a,), None)


def tanh(a: DiffNode) -> DiffNode:
    return DiffNode(a.tape, np.tanh(a.value), "tanh", (a,), None)


def leaky_relu(a: DiffNode) -> DiffNode:
    return DiffNode(a.tape, kernels.leaky_relu_fwd(a.value), "leaky_relu", (a,), None)


def relu(a: DiffNode) -> DiffNode:
    return DiffNode(a.tape, kernels.relu_fwd(a.value), "relu", (a,), None)


def exp(a: DiffNode) -> DiffNode:
    return DiffNode(a.tape, np.exp(a.value), "exp", (a,), None)


def log(a: DiffNode) -> DiffNode:
    return DiffNode(a.tape, np.log(a.value), "log", (a,), None)


def square(a: DiffNode) -> DiffNode:
    return DiffNode(a.tape, a.value * a.value, "square", (a,), None)


def powc(a: DiffNode, exponent: float) -> DiffNode:
    return DiffNode(a.tape, a.value ** exponent, "powc", (a,), float(exponent))


def sum_all(a: DiffNode) -> DiffNode:
    return DiffNode(a.tape, _as_array(a.value.sum()), "sum", (a,), None)


def mean_all(a: DiffNode) -> DiffNode:
    return DiffNode(a.tape, _as_array(a.value.mean()), "mean", (a,), None)


def reshape(a: DiffNode, shape: tuple) -> DiffNode:
    return DiffNode(a.tape, a.value.reshape(shape), "reshape", (a,), a.value.shape)


def transpose(a: DiffNode) -> DiffNode:
    return DiffNode(a.tape, a.value.T.copy(), "transpose", (a,), None)


def narrow(a: DiffNode, axis: int, start: int, length: int) -> DiffNode:
    if axis not in (0, 1) or a.value.ndim != 2:
        raise ShapeMismatchError(f"narrow: expects a 2-d value, got shape {a.shape}")
    sl = (slice(start, start + length), slice(None)) if axis == 0 \
        else (slice(None), slice(start, start + length))
    return DiffNode(a.tape, a.value[sl].copy(), "narrow", (a,), sl)


def affine(x: DiffNode, w: DiffNode, b: DiffNode) -> DiffNode:
    """x @ w + b with b a length-(out) bias broadcast over rows."""
    if x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeMismatchError(
            f"affine: x{x.shape} @ w{w.shape} + b{b.shape} inconsistent"
        )
    return DiffNode(x.tape, x.value @ w.value + b.value, "affine", (x, w, b), None)


def coupling(u: DiffNode, s: DiffNode, t: DiffNode, mask: np.ndarray) -> DiffNode:
    """Masked affine coupling update; mask is a constant 0/1 array of u's shape."""
    val = kernels.coupling_combine_fwd(u.value, s.value, t.value, mask)
    return DiffNode(u.tape, val, "coupling", (u, s, t), mask)


_OP_NAMES = {
    "matmul": matmul, "add": add, "sub": sub, "mul": mul, "tanh": tanh,
    "leaky_relu": leaky_relu, "relu": relu, "exp": exp, "log": log,
    "square": square, "neg": neg, "sum": sum_all, "mean": mean_all,
}


def record(op_kind: str, *operands, **kwargs) -> DiffNode:
    """Record a named op; thin dispatcher over the typed constructors."""
    if op_kind == "smul":
        return smul(operands[0], kwargs["c"])
    if op_kind == "powc":
        return powc(operands[0], kwargs["exponent"])
    if op_kind not in _OP_NAMES:
        raise ValueError(f"unsupported op-kind: {op_kind}")
    return _OP_NAMES[op_kind](*operands)


# --- backward ----------------------------------------------------------------

def _backprop_one(node: DiffNode, g: np.ndarray) -> None:
    op = node.op
    parents = node.parents
    if op == "matmul":
        a, b = parents
        if a.requires_grad:
            _accum(a, g @ b.value.T, fresh=True)
        if b.requires_grad:
            _accum(b, a.value.T @ g, fresh=True)
    elif op == "add":
        _accum(parents[0], g)
        _accum(parents[1], g)
    elif op == "sub":
        _accum(parents[0], g)
        _accum(parents[1], -g, fresh=True)
    elif op == "mul":
        a, b = parents
        if a.requires_grad:
            _accum(a, g * b.value, fresh=True)
        if b.requires_grad:
            _accum(b, g * a.value, fresh=True)
    elif op == "smul":
        _accum(parents[0], g * node.ctx, fresh=True)
    elif op == "neg":
        _accum(parents[0], -g, fresh=True)
    elif op == "tanh":
        _accum(parents[0], kernels.tanh_vjp(node.value, g), fresh=True)
    elif op == "leaky_relu":
        _accum(parents[0], kernels.leaky_relu_vjp(parents[0].value, g), fresh=True)
    elif op == "relu":
        _accum(parents[0], kernels.relu_vjp(parents[0].value, g), fresh=True)
    elif op == "exp":
        _accum(parents[0], g * node.value, fresh=True)
    elif op == "log":
        _accum(parents[0], g / parents[0].value, fresh=True)
    elif op == "square":
        _accum(parents[0], 2.0 * parents[0].value * g, fresh=True)
    elif op == "powc":
        p = node.ctx
        _accum(parents[0], p * parents[0].value ** (p - 1.0) * g, fresh=True)
    elif op == "sum":
        a = parents[0]
        _accum(a, np.full_like(a.value, float(g)), fresh=True)
    elif op == "mean":
        a = parents[0]
        _accum(a, np.full_like(a.value, float(g) / a.value.size), fresh=True)
    elif op == "reshape":
        _accum(parents[0], g.reshape(node.ctx))
    elif op == "transpose":
        _accum(parents[0], g.T)
    elif op == "narrow":
        a = parents[0]
        contrib = np.zeros_like(a.value)
        contrib[node.ctx] = g
        _accum(a, contrib, fresh=True)
    elif op == "affine":
        x, w, b = parents
        if x.requires_grad:
            _accum(x, g @ w.value.T, fresh=True)
        _accum(w, x.value.T @ g, fresh=True)
        _accum(b, g.sum(axis=0), fresh=True)
    elif op == "coupling":
        u, s, t = parents
        du, ds, dt = kernels.coupling_combine_vjp(
            u.value, s.value, t.value, node.ctx, g
        )
        _accum(u, du, fresh=True)
        _accum(s, ds, fresh=True)
        _accum(t, dt, fresh=True)
    elif op in ("leaf", "const"):
        pass
    else:  # pragma: no cover
        raise AssertionError(f"no backward rule for op {op}")


def backward(tape: DiffTape, root: DiffNode) -> dict[DiffNode, np.ndarray]:
    """Reverse sweep from a scalar root; returns adjoints of all leaf nodes."""
    if root.value.shape != ():
        raise ValueError(f"backward root must be scalar, got shape {root.value.shape}")
    for node in tape.nodes:
        node.adjoint = None
    root.adjoint = np.ones(())
    for i in range(root.idx, -1, -1):
        node = tape.nodes[i]
        if node.adjoint is None or not node.requires_grad:
            continue
        _backprop_one(node, node.adjoint)
    grads = {}
    for node in tape.nodes:
        if node.op == "leaf":
            grads[node] = node.adjoint if node.adjoint is not None \
                else np.zeros_like(node.value)
    return grads


def grad_check(
    f: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max relative error between f's analytic gradient and central differences.

    f maps a parameter vector to (scalar value, gradient vector).
    """
    if h <= 0.0:
        raise ValueError(f"grad_check requires h > 0, got {h}")
    x0 = np.asarray(x0, dtype=np.float64)
    _, grad = f(x0)
    grad = np.asarray(grad, dtype=np.float64)
    worst = 0.0
    for i in range(x0.size):
        xp = x0.copy()
        xp[i] += h
        xm = x0.copy()
        xm[i] -= h
        fp, _ = f(xp)
        fm, _ = f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ArithmeticError(
                f"grad_check: non-finite evaluation perturbing coordinate {i}"
            )
        fd = (fp - fm) / (2.0 * h)
        err = abs(grad[i] - fd) / max(1.0, abs(grad[i]))
        worst = max(worst, err)
    return worst
