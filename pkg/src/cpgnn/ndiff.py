"""Small reverse-mode differentiation core over 2-D float64 arrays.

Every operation is a method on :class:`Tape`, which records the operands and a
backward rule.  :func:`backward` walks the records in reverse and accumulates
gradients.  Only ``add_bias`` broadcasts (a row vector added to every row).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None) -> None:
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class _Record:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


class Tape:
    """Append-only record of differentiable operations.

    With ``record=False`` the operations only compute forward values, which is
    what evaluation passes use.
    """

    def __init__(self, record: bool = True) -> None:
        self.record = record
        self.records: list[_Record] = []
        self.leaves: dict[str, Tensor] = {}
        self._outputs: set[int] = set()

    def leaf(self, name: str, data, requires_grad: bool = True) -> Tensor:
        if name in self.leaves:
            raise KeyError(f"leaf {name!r} already registered")
        t = Tensor(data, requires_grad=requires_grad, name=name)
        self.leaves[name] = t
        return t

    def _emit(self, op: str, inputs: tuple[Tensor, ...], value: np.ndarray,
              grad_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"{op}: non-finite output")
        needs = any(t.requires_grad for t in inputs)
        out = Tensor.__new__(Tensor)
        out.data = value
        out.requires_grad = needs
        out.name = None
        if self.record and needs:
            self.records.append(_Record(op, inputs, out, grad_fn))
            self._outputs.add(id(out))
        return out

    def owns(self, t: Tensor) -> bool:
        return id(t) in self._outputs

    # -- linear algebra -------------------------------------------------
    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
        A, B = a.data, b.data
        return self._emit("matmul", (a, b), A @ B, lambda g: (g @ B.T, A.T @ g))

    def sparse_dense_matmul(self, m: sp.csr_matrix, x: Tensor) -> Tensor:
        if m.shape[1] != x.shape[0]:
            raise ShapeError(f"sparse_dense_matmul: shape mismatch {m.shape} @ {x.shape}")
        return self._emit("sparse_dense_matmul", (x,), np.asarray(m @ x.data),
                          lambda g: (np.asarray(m.T @ g),))

    def transpose(self, a: Tensor) -> Tensor:
        return self._emit("transpose", (a,), a.data.T.copy(), lambda g: (g.T,))

    def add_bias(self, a: Tensor, b: Tensor) -> Tensor:
        if b.shape != (1, a.shape[1]):
            raise ShapeError(f"add_bias: bias shape {b.shape} incompatible with {a.shape}")
        return self._emit("add_bias", (a, b), a.data + b.data,
                          lambda g: (g, g.sum(axis=0, keepdims=True)))

    # -- elementwise ----------------------------------------------------
    def add(self, a: Tensor, b: Tensor) -> Tensor:
        _same_shape("add", a, b)
        return self._emit("add", (a, b), a.data + b.data, lambda g: (g, g))

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        _same_shape("sub", a, b)
        return self._emit("sub", (a, b), a.data - b.data, lambda g: (g, -g))

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        _same_shape("mul", a, b)
        A, B = a.data, b.data
        return self._emit("mul", (a, b), A * B, lambda g: (g * B, g * A))

    def scale(self, a: Tensor, c: float | Tensor) -> Tensor:
        """Multiply by a constant or by a differentiable 1x1 tensor."""
        if isinstance(c, Tensor):
            if c.shape != (1, 1):
                raise ShapeError(f"scale: factor must be 1x1, got {c.shape}")
            A, s = a.data, c.data[0, 0]
            return self._emit("scale", (a, c), A * s,
                              lambda g: (g * s, np.array([[np.sum(g * A)]])))
        c = float(c)
        return self._emit("scale", (a,), a.data * c, lambda g: (g * c,))

    def relu(self, a: Tensor) -> Tensor:
        mask = a.data > 0
        return self._emit("relu", (a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))

    def sigmoid(self, a: Tensor) -> Tensor:
        y = _sigmoid(a.data)
        return self._emit("sigmoid", (a,), y, lambda g: (g * y * (1.0 - y),))

    def tanh(self, a: Tensor) -> Tensor:
        y = np.tanh(a.data)
        return self._emit("tanh", (a,), y, lambda g: (g * (1.0 - y * y),))

    def log(self, a: Tensor) -> Tensor:
        if np.any(a.data <= 0):
            raise NonFiniteError("log: non-positive input")
        A = a.data
        return self._emit("log", (a,), np.log(A), lambda g: (g / A,))

    def log_sigmoid(self, a: Tensor) -> Tensor:
        """``log(sigmoid(a))`` without underflow for large negative inputs."""
        A = a.data
        return self._emit("log_sigmoid", (a,), _log_sigmoid(A),
                          lambda g: (g * _sigmoid(-A),))

    def softmax_rows(self, a: Tensor) -> Tensor:
        z = a.data - a.data.max(axis=1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=1, keepdims=True)
        return self._emit("softmax_rows", (a,), y,
                          lambda g: (y * (g - (g * y).sum(axis=1, keepdims=True)),))

    # -- structural -----------------------------------------------------
    def concat_cols(self, parts: Sequence[Tensor]) -> Tensor:
        rows = {p.shape[0] for p in parts}
        if len(rows) != 1:
            raise ShapeError(f"concat_cols: row counts differ {[p.shape for p in parts]}")
        widths = np.cumsum([0] + [p.shape[1] for p in parts])
        return self._emit("concat_cols", tuple(parts), np.concatenate([p.data for p in parts], axis=1),
                          lambda g: tuple(g[:, widths[i]:widths[i + 1]] for i in range(len(parts))))

    def mean_rows(self, a: Tensor) -> Tensor:
        n = a.shape[0]
        if n == 0:
            raise ShapeError("mean_rows: empty tensor")
        return self._emit("mean_rows", (a,), a.data.mean(axis=0, keepdims=True),
                          lambda g: (np.repeat(g / n, n, axis=0),))

    def row_select(self, a: Tensor, idx: np.ndarray) -> Tensor:
        idx = np.asarray(idx, dtype=np.int64)
        n = a.shape[0]

        def grad(g: np.ndarray):
            out = np.zeros((n, g.shape[1]))
            np.add.at(out, idx, g)
            return (out,)

        return self._emit("row_select", (a,), a.data[idx], grad)

    def col_select(self, a: Tensor, j: int) -> Tensor:
        m = a.shape[1]

        def grad(g: np.ndarray):
            out = np.zeros((a.shape[0], m))
            out[:, j] = g[:, 0]
            return (out,)

        return self._emit("col_select", (a,), a.data[:, j:j + 1].copy(), grad)

    def row_sum(self, a: Tensor) -> Tensor:
        """Sum across columns, giving an (n, 1) column."""
        m = a.shape[1]
        return self._emit("row_sum", (a,), a.data.sum(axis=1, keepdims=True),
                          lambda g: (np.repeat(g, m, axis=1),))

    def sum(self, a: Tensor) -> Tensor:
        shape = a.shape
        return self._emit("sum", (a,), np.array([[a.data.sum()]]),
                          lambda g: (np.full(shape, g[0, 0]),))

    def dropout_mask_apply(self, a: Tensor, mask: np.ndarray) -> Tensor:
        """Scale row ``i`` by ``mask[i]`` (a precomputed keep/rescale vector)."""
        mask = np.asarray(mask, dtype=np.float64).reshape(-1, 1)
        if mask.shape[0] != a.shape[0]:
            raise ShapeError(f"dropout_mask_apply: mask length {mask.shape[0]} vs {a.shape[0]} rows")
        return self._emit("dropout_mask_apply", (a,), a.data * mask, lambda g: (g * mask,))


def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    """Gradients of ``loss`` with respect to every leaf registered on ``tape``.

    Leaves that do not influence the loss get zero gradients.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward: loss must be 1x1, got {loss.shape}")
    if not tape.owns(loss):
        raise ValueError("backward: loss was not produced on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    return {
        name: grads.get(id(t), np.zeros_like(t.data)) if t.requires_grad else np.zeros_like(t.data)
        for name, t in tape.leaves.items()
    }


def finite_diff_check(
    f: Callable[[Tape, dict[str, Tensor]], Tensor],
    params: dict[str, np.ndarray],
    eps: float = 1e-5,
    names: Sequence[str] | None = None,
) -> float:
    """Worst relative error between backward-pass and central-difference gradients.

    ``f`` builds a scalar loss on the given tape from leaves bound to ``params``.
    The relative error of each entry is ``|fd - bp| / max(|fd|, |bp|, 1e-8)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def evaluate(record: bool):
        tape = Tape(record=record)
        bound = {k: tape.leaf(k, v) for k, v in params.items()}
        out = f(tape, bound)
        return tape, out

    tape, loss = evaluate(True)
    analytic = backward(tape, loss)
    worst = 0.0
    for name in names if names is not None else params:
        arr = params[name]
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = evaluate(False)[1].item()
            flat[i] = orig - eps
            down = evaluate(False)[1].item()
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NonFiniteError(f"finite_diff_check: non-finite loss perturbing {name}[{i}]")
            fd = (up - down) / (2 * eps)
            bp = analytic[name].reshape(-1)[i]
            err = abs(fd - bp) / max(abs(fd), abs(bp), 1e-8)
            worst = max(worst, err)
    return worst
