from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import NumericalFailure

Backward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Node:
    """One recorded operation; parents are ids of earlier nodes"""
    op: str
    value: np.ndarray
    parents: Tuple[int, ...] = ()
    backward: Optional[Backward] = None


class Tensor:
    """Handle to a node on a tape; arithmetic records new nodes on the same tape"""

    # make numpy defer to the reflected operators
    __array_ufunc__ = None

    def __init__(self, tape: "Tape", node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.id].value

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"<Tensor #{self.id} {self.tape.nodes[self.id].op} {self.shape}>"

    def __add__(self, other):
        from autodiff import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from autodiff import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from autodiff import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from autodiff import ops
        return ops.matmul(self, other)


class Tape:
    """Append-only record of operations for reverse-mode differentiation"""

    def __init__(self):
        self.nodes: List[Node] = []

    def _append(self, node: Node) -> Tensor:
        self.nodes.append(node)
        return Tensor(self, len(self.nodes) - 1)

    def leaf(self, value) -> Tensor:
        """Register an input or parameter whose adjoint may be requested"""
        return self._append(Node("leaf", np.array(value, dtype=float)))

    def constant(self, value) -> Tensor:
        return self._append(Node("const", np.array(value, dtype=float)))

    def record(self, op: str, value: np.ndarray, parents: Sequence[Tensor], backward: Backward) -> Tensor:
        value = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(value)):
            raise NumericalFailure(f"{op} produced non-finite values")
        for parent in parents:
            if parent.tape is not self:
                raise ValueError(f"{op}: operand recorded on a different tape")
        return self._append(Node(op, value, tuple(p.id for p in parents), backward))

    def backward(self, root: Tensor) -> Dict[int, np.ndarray]:
        """Adjoints of root with respect to every node that feeds it"""
        if root.value.size != 1:
            raise ValueError(f"backward needs a scalar root, got shape {root.shape}")

        adjoints: Dict[int, np.ndarray] = {root.id: np.ones_like(root.value)}
        for node_id in range(root.id, -1, -1):
            adjoint = adjoints.get(node_id)
            node = self.nodes[node_id]
            if adjoint is None or node.backward is None:
                continue
            for parent, grad in zip(node.parents, node.backward(adjoint)):
                if grad is None:
                    continue
                if parent in adjoints:
                    adjoints[parent] = adjoints[parent] + grad
                else:
                    adjoints[parent] = grad
        return adjoints

    def gradients(self, root: Tensor, wrt: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
        """Named adjoints for the given leaves; leaves the root never reaches get zeros"""
        adjoints = self.backward(root)
        return {
            name: adjoints.get(tensor.id, np.zeros_like(tensor.value))
            for name, tensor in wrt.items()
        }
