"""Define-by-run tape for reverse-mode differentiation.

Ops append a node per call; ``backward`` walks the nodes in exact reverse
order, accumulating gradients additively whenever a tensor feeds several
consumers. The tape is rebuilt every training step and cleared afterwards,
which keeps saved activations alive exactly as long as they are needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import ShapeError, Tensor4

# A backward fn maps the output gradient to one gradient (or None) per input.
BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class TapeNode:
    op: str
    inputs: tuple[Tensor4, ...]
    output: Tensor4
    backward: BackwardFn


class Tape:
    """Append-only record of executed ops."""

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def record(self, op: str, inputs: tuple[Tensor4, ...], output: Tensor4,
               backward: BackwardFn) -> None:
        self.nodes.append(TapeNode(op, inputs, output, backward))

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


def backward(tape: Tape, loss: Tensor4) -> None:
    """Populate gradients of every parameter the loss depends on.

    ``loss`` must be a 1x1x1x1 tensor produced through ``tape``. Gradients
    land in the ``grad`` buffers of leaf tensors that have one (parameters,
    or tensors passed through ``as_leaf``) and accumulate across calls.
    """
    if loss.dims != (1, 1, 1, 1):
        raise ShapeError(f"loss must be 1x1x1x1, got {loss.dims}")
    if not any(node.output is loss for node in tape.nodes):
        raise ValueError("loss tensor was not produced on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1, 1, 1), dtype=loss.dtype)}
    for node in reversed(tape.nodes):
        g_out = grads.pop(id(node.output), None)
        if g_out is None:
            continue
        input_grads = node.backward(g_out)
        for tensor, g in zip(node.inputs, input_grads):
            if g is None:
                continue
            if tensor.grad is not None:
                tensor.grad += g
            else:
                acc = grads.get(id(tensor))
                if acc is None:
                    grads[id(tensor)] = g.copy()
                else:
                    acc += g
