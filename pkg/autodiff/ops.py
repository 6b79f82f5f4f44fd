"""Differentiable primitives over batch-major arrays

Every op records its value and a closure mapping the output adjoint to one
adjoint per input. Plain numpy operands are lifted to tape constants.
"""
from typing import Sequence

import numpy as np

from autodiff.tape import Tape, Tensor

# smoothing constant of the Charbonnier-style absolute value
EPSILON = 1e-9


def _tape_of(*operands) -> Tape:
    for operand in operands:
        if isinstance(operand, Tensor):
            return operand.tape
    raise ValueError("at least one operand must be a Tensor")


def _lift(tape: Tape, operand) -> Tensor:
    if isinstance(operand, Tensor):
        return operand
    return tape.constant(operand)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum an adjoint back down to the shape of a broadcast operand"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _check_broadcast("add", a.value, b.value)
    sa, sb = a.shape, b.shape
    return tape.record("add", a.value + b.value, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _check_broadcast("sub", a.value, b.value)
    sa, sb = a.shape, b.shape
    return tape.record("sub", a.value - b.value, (a, b),
                       lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _check_broadcast("mul", a.value, b.value)
    va, vb = a.value, b.value
    return tape.record("mul", va * vb, (a, b),
                       lambda g: (_unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape)))


def neg(a: Tensor) -> Tensor:
    return a.tape.record("neg", -a.value, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    va, vb = a.value, b.value
    if va.ndim != 2 or vb.ndim != 2 or va.shape[1] != vb.shape[0]:
        raise ValueError(f"matmul: shape mismatch {va.shape} @ {vb.shape}")
    return tape.record("matmul", va @ vb, (a, b), lambda g: (g @ vb.T, va.T @ g))


def sparse_matmul(x: Tensor, matrix) -> Tensor:
    """Apply a fixed sparse operator to every row: out[b] = matrix @ x[b]"""
    if x.shape[-1] != matrix.shape[1]:
        raise ValueError(f"sparse_matmul: operand has {x.shape[-1]} columns, operator expects {matrix.shape[1]}")
    value = np.asarray((matrix @ x.value.T).T)
    return x.tape.record("sparse_matmul", value, (x,), lambda g: (np.asarray((matrix.T @ g.T).T),))


def affine(x: Tensor, scale, shift) -> Tensor:
    """x * scale + shift with constant scale and shift"""
    scale = np.asarray(scale, dtype=float)
    shift = np.asarray(shift, dtype=float)
    sx = x.shape
    return x.tape.record("affine", x.value * scale + shift, (x,), lambda g: (_unbroadcast(g * scale, sx),))


def scale(x: Tensor, factor: float) -> Tensor:
    return x.tape.record("scale", x.value * factor, (x,), lambda g: (g * factor,))


def relu(x: Tensor) -> Tensor:
    active = x.value > 0
    return x.tape.record("relu", np.where(active, x.value, 0.0), (x,), lambda g: (g * active,))


def sigmoid(x: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return x.tape.record("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def smooth_abs(x: Tensor, epsilon: float = EPSILON) -> Tensor:
    """sqrt(x^2 + epsilon^2), a differentiable |x|"""
    root = np.sqrt(x.value ** 2 + epsilon ** 2)
    vx = x.value
    return x.tape.record("smooth_abs", root, (x,), lambda g: (g * vx / root,))


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.value)
    return x.tape.record("exp", e, (x,), lambda g: (g * e,))


def cos(x: Tensor) -> Tensor:
    vx = x.value
    return x.tape.record("cos", np.cos(vx), (x,), lambda g: (-g * np.sin(vx),))


def sin(x: Tensor) -> Tensor:
    vx = x.value
    return x.tape.record("sin", np.sin(vx), (x,), lambda g: (g * np.cos(vx),))


def square(x: Tensor) -> Tensor:
    vx = x.value
    return x.tape.record("square", vx ** 2, (x,), lambda g: (2.0 * g * vx,))


def clip_max(x: Tensor, ceiling: float) -> Tensor:
    """Clip from above; clipped entries pass no adjoint"""
    kept = x.value <= ceiling
    return x.tape.record("clip_max", np.minimum(x.value, ceiling), (x,), lambda g: (g * kept,))


def sum(x: Tensor) -> Tensor:
    shape = x.shape
    return x.tape.record("sum", np.sum(x.value), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def rowsum(x: Tensor) -> Tensor:
    """Sum over the feature axis, keeping the batch axis"""
    shape = x.shape
    return x.tape.record("rowsum", np.sum(x.value, axis=-1), (x,),
                         lambda g: (np.broadcast_to(np.expand_dims(g, -1), shape).copy(),))


def mean(x: Tensor) -> Tensor:
    shape, count = x.shape, max(x.value.size, 1)
    return x.tape.record("mean", np.mean(x.value) if x.value.size else 0.0, (x,),
                         lambda g: (np.full(shape, float(g) / count),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    tape = _tape_of(*tensors)
    widths = [t.shape[axis] for t in tensors]
    splits = np.cumsum(widths)[:-1]
    value = np.concatenate([t.value for t in tensors], axis=axis)
    return tape.record("concat", value, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


def slice(x: Tensor, start: int, stop: int) -> Tensor:
    """Columns start:stop of a batch-major tensor"""
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return x.tape.record("slice", x.value[..., start:stop], (x,), backward)


def take(x: Tensor, columns) -> Tensor:
    """Gather arbitrary columns; repeated columns accumulate adjoints"""
    columns = np.asarray(columns, dtype=int)
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        if full.ndim == 1:
            np.add.at(full, columns, g)
        else:
            # transposed view so the gather axis comes first
            np.add.at(full.T, columns, g.T)
        return (full,)

    return x.tape.record("take", x.value[..., columns], (x,), backward)


def detach(x: Tensor) -> Tensor:
    """Same values, but no adjoint flows back through this node"""
    return x.tape.record("detach", x.value.copy(), (), lambda g: ())
