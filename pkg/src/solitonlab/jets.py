"""Truncated Taylor jets of tensor fields sampled on a parameter grid.

A :class:`Jet` stores a field together with its partial derivatives up to a
fixed order.  Part ``d`` has shape ``grid + tensor + (n,) * d``; derivative
axes always trail the tensor axes, and every derivative block is symmetric.
Products follow the Leibniz rule, so geometric quantities assembled from the
chart jets carry exact derivatives without any differencing.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

# einsum letters reserved for derivative axes; tensor specs must avoid them
_DLETTERS = "WXYZ"
MAX_ORDER = len(_DLETTERS)


class Jet:
    """Tensor field plus symmetric partial derivatives up to ``order``."""

    __slots__ = ("parts", "n")

    def __init__(self, parts: Sequence[np.ndarray], n: int):
        if not parts:
            raise ValueError("a jet needs at least its value part")
        if len(parts) - 1 > MAX_ORDER:
            raise ValueError(f"jet order above {MAX_ORDER} is not supported")
        self.parts = [np.asarray(p, dtype=float) for p in parts]
        self.n = n

    @classmethod
    def constant(cls, value, grid_shape, order: int) -> "Jet":
        """Spatially constant jet broadcast over ``grid_shape``."""
        value = np.broadcast_to(np.asarray(value, dtype=float), tuple(grid_shape) + np.shape(value))
        n = len(grid_shape)
        parts = [np.array(value)] + [np.zeros(value.shape + (n,) * d) for d in range(1, order + 1)]
        return cls(parts, n)

    @property
    def order(self) -> int:
        return len(self.parts) - 1

    @property
    def value(self) -> np.ndarray:
        return self.parts[0]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.parts[: order + 1], self.n)

    def grad(self) -> "Jet":
        """Jet of the first partials; the new trailing tensor axis is the derivative index."""
        if self.order < 1:
            raise ValueError("order-0 jet has no derivative information")
        return Jet(self.parts[1:], self.n)

    def component(self, axis: int, index: int) -> "Jet":
        """Select ``index`` along tensor axis ``axis``."""
        return Jet([np.take(p, index, axis=self.n + axis) for p in self.parts], self.n)

    def permute(self, perm: Sequence[int]) -> "Jet":
        """Reorder tensor axes: new tensor axis ``t`` is old tensor axis ``perm[t]``."""
        out = []
        for d, p in enumerate(self.parts):
            k = len(perm)
            axes = list(range(self.n)) + [self.n + q for q in perm]
            axes += list(range(self.n + k, self.n + k + d))
            out.append(np.transpose(p, axes))
        return Jet(out, self.n)

    def map_tensor(self, fn) -> "Jet":
        """Apply a map that acts on the tensor block and leaves derivative axes alone."""
        return Jet([fn(p) for p in self.parts], self.n)

    def _binary(self, other, op) -> "Jet":
        if isinstance(other, Jet):
            k = min(self.order, other.order)
            return Jet([op(a, b) for a, b in zip(self.parts[: k + 1], other.parts[: k + 1])], self.n)
        # constant offset: derivatives unchanged
        return Jet([op(self.parts[0], np.asarray(other, dtype=float))] + self.parts[1:], self.n)

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Jet([-p for p in self.parts], self.n)

    def __mul__(self, c):
        if isinstance(c, Jet):
            return einsum(",->", self, c)
        return Jet([c * p for p in self.parts], self.n)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, value_shape={self.value.shape})"


def _split_spec(spec: str):
    inputs, output = spec.split("->")
    inputs = inputs.split(",")
    for s in inputs + [output]:
        if any(c in _DLETTERS for c in s):
            raise ValueError(f"einsum letters {_DLETTERS} are reserved for derivative axes")
    return inputs, output


def einsum(spec: str, *operands) -> Jet:
    """Leibniz-rule einsum over jets.

    ``spec`` describes tensor axes only (grid axes are implicit).  Plain
    arrays are accepted as constant operands.  The result has the smallest
    order among the jet operands.
    """
    inputs, output = _split_spec(spec)
    if len(inputs) != len(operands):
        raise ValueError("operand count does not match spec")
    if len(operands) > 2:
        return _fold(inputs, output, operands)
    jets = [op for op in operands if isinstance(op, Jet)]
    if not jets:
        raise TypeError("at least one operand must be a Jet")
    n = jets[0].n
    order = min(j.order for j in jets)
    jet_slots = [i for i, op in enumerate(operands) if isinstance(op, Jet)]

    parts = []
    for d in range(order + 1):
        letters = _DLETTERS[:d]
        out_spec = "..." + output + letters
        total = None
        # distribute each derivative index to one jet operand
        for assign in itertools.product(jet_slots, repeat=d):
            subs, arrays = [], []
            for i, op in enumerate(operands):
                if isinstance(op, Jet):
                    mine = "".join(letters[t] for t in range(d) if assign[t] == i)
                    subs.append("..." + inputs[i] + mine)
                    arrays.append(op.parts[len(mine)])
                else:
                    subs.append("..." + inputs[i])
                    arrays.append(np.asarray(op, dtype=float))
            term = np.einsum(",".join(subs) + "->" + out_spec, *arrays)
            total = term if total is None else total + term
        parts.append(total)
    return Jet(parts, n)


def _fold(inputs, output, operands):
    # pairwise left-to-right contraction; keeps only indices still needed downstream
    cur_spec, cur = inputs[0], operands[0]
    for i in range(1, len(operands)):
        later = set("".join(inputs[i + 1:]) + output)
        keep = []
        for c in cur_spec + inputs[i]:
            if c in later and c not in keep:
                keep.append(c)
        out = "".join(keep) if i < len(operands) - 1 else output
        spec = f"{cur_spec},{inputs[i]}->{out}"
        pair = (cur, operands[i])
        if not any(isinstance(o, Jet) for o in pair):
            cur = np.einsum("..." + cur_spec + ",..." + inputs[i] + "->..." + out, *pair)
        else:
            cur = einsum(spec, *pair)
        cur_spec = out
    return cur


def inverse(a: Jet) -> Jet:
    """Jet of the matrix inverse of a square-matrix-valued jet (tensor axes ``ab``)."""
    b0 = np.linalg.inv(a.parts[0])
    parts = [b0]
    for d in range(1, a.order + 1):
        letters = _DLETTERS[:d]
        acc = None
        # (A B)_d = 0: isolate the term with B_d
        for mask in range(1, 2**d):
            s = "".join(letters[t] for t in range(d) if mask >> t & 1)
            r = "".join(letters[t] for t in range(d) if not mask >> t & 1)
            term = np.einsum(
                f"...ab{s},...bc{r}->...ac{letters}", a.parts[len(s)], parts[len(r)]
            )
            acc = term if acc is None else acc + term
        parts.append(-np.einsum(f"...ab,...bc{letters}->...ac{letters}", b0, acc))
    return Jet(parts, a.n)


def separable(factors: Sequence[np.ndarray], order: int) -> Jet:
    """Jet of ``prod_a phi_a(u_a)`` on a tensor grid.

    ``factors[a]`` has shape ``(order + 1, m_a)`` holding the value and the
    derivatives of the one-dimensional factor along axis ``a``.
    """
    n = len(factors)
    parts = []
    for d in range(order + 1):
        shape = tuple(f.shape[1] for f in factors) + (n,) * d
        part = np.empty(shape)
        for idx in itertools.product(range(n), repeat=d):
            counts = [idx.count(a) for a in range(n)]
            prod = factors[0][counts[0]]
            for a in range(1, n):
                prod = np.multiply.outer(prod, factors[a][counts[a]])
            part[(...,) + idx] = prod
        parts.append(part)
    return Jet(parts, n)


def stack(jets: Sequence[Jet]) -> Jet:
    """Stack jets along a new leading tensor axis."""
    order = min(j.order for j in jets)
    n = jets[0].n
    return Jet([np.stack([j.parts[d] for j in jets], axis=n) for d in range(order + 1)], n)
