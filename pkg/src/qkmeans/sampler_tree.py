"""Weighted index sampling over a complete binary sum tree.

Leaves hold nonnegative weights, internal nodes hold subtree sums, and a
single uniform draw is routed root-to-leaf so that leaf i is returned with
probability w[i] / sum(w).  Build is O(n), update and sample are O(log n).
"""

from __future__ import annotations

import numpy as np

__all__ = ["SamplerTree"]

# Below this capacity a plain-float mirror of the node array is kept; scalar
# descents and small batches then avoid numpy call overhead.  Both paths add
# the same IEEE doubles in the same order, so results are bit-identical.
_SMALL_CAPACITY = 2048


class SamplerTree:
    """Sum tree over a fixed-length weight vector.

    The leaf array is zero-padded to the smallest power of two >= n so the
    tree is complete; padded leaves carry zero weight and are unreachable
    by sampling.
    """

    __slots__ = ("_nodes", "_list", "_n", "_capacity", "_depth")

    def __init__(self, weights) -> None:
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d sequence")
        lo, hi = float(w.min()), float(w.max())
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("weights must be finite")
        if lo < 0.0:
            raise ValueError("weights must be nonnegative")
        if hi <= 0.0:
            raise ValueError("all weights are zero")
        n = w.size
        capacity = 1 << (n - 1).bit_length() if n > 1 else 1
        self._n = n
        self._capacity = capacity
        self._depth = capacity.bit_length() - 1
        if capacity <= _SMALL_CAPACITY:
            nodes = [0.0] * (2 * capacity)
            nodes[capacity : capacity + n] = w.tolist()
            for i in range(capacity - 1, 0, -1):
                nodes[i] = nodes[2 * i] + nodes[2 * i + 1]
            self._list = nodes
            self._nodes = None
        else:
            nodes = np.zeros(2 * capacity, dtype=np.float64)
            nodes[capacity : capacity + n] = w
            size = capacity
            while size > 1:
                size //= 2
                nodes[size : 2 * size] = nodes[2 * size : 4 * size : 2] + nodes[2 * size + 1 : 4 * size : 2]
            self._nodes = nodes
            self._list = None

    @property
    def n(self) -> int:
        return self._n

    @property
    def capacity(self) -> int:
        return self._capacity

    @property
    def total(self) -> float:
        """Sum of all weights (the root)."""
        return self._list[1] if self._list is not None else float(self._nodes[1])

    def weight(self, index: int) -> float:
        if not 0 <= index < self._n:
            raise IndexError(f"leaf index {index} out of range [0, {self._n})")
        pos = self._capacity + index
        return self._list[pos] if self._list is not None else float(self._nodes[pos])

    def node_array(self) -> np.ndarray:
        """Copy of the heap-ordered node array (index 1 is the root)."""
        if self._list is not None:
            return np.asarray(self._list, dtype=np.float64)
        return self._nodes.copy()

    def update(self, index: int, weight: float) -> None:
        """Set leaf `index` to `weight` and refresh the path to the root.

        Parents are recomputed as left + right (not adjusted by the delta),
        so the tree is bit-identical to a fresh build from the same leaves.
        """
        if not 0 <= index < self._n:
            raise IndexError(f"leaf index {index} out of range [0, {self._n})")
        w = float(weight)
        if not np.isfinite(w):
            raise ValueError("weight must be finite")
        if w < 0.0:
            raise ValueError("weight must be nonnegative")
        nodes = self._list if self._list is not None else self._nodes
        pos = self._capacity + index
        nodes[pos] = w
        pos //= 2
        while pos >= 1:
            nodes[pos] = nodes[2 * pos] + nodes[2 * pos + 1]
            pos //= 2

    def sample_at(self, u: float) -> int:
        """Deterministic descent for a uniform value u in [0, 1).

        At each node the scaled draw is compared against the left-child sum;
        ties descend left.  Exposed so tests can enumerate the map from
        uniforms to leaves.
        """
        nodes = self._list if self._list is not None else self._nodes
        root = nodes[1]
        if root <= 0.0:
            raise ValueError("all weights are zero")
        target = u * root
        node = 1
        for _ in range(self._depth):
            node *= 2
            left = nodes[node]
            if target > left:
                target -= left
                node += 1
        return node - self._capacity

    def sample(self, rng: np.random.Generator) -> int:
        """Draw one leaf index with probability proportional to its weight."""
        return self.sample_at(rng.random())

    def sample_batch(self, u: np.ndarray) -> np.ndarray:
        """Vectorized `sample_at` over an array of uniforms.

        Performs the same tie-left descent with the same arithmetic, so each
        entry matches the scalar path bit for bit.
        """
        if self._list is not None:
            nodes = self._list
            root = nodes[1]
            if root <= 0.0:
                raise ValueError("all weights are zero")
            cap = self._capacity
            depth = self._depth
            out = np.empty(len(u), dtype=np.intp)
            for j, uj in enumerate(u.tolist() if isinstance(u, np.ndarray) else u):
                target = uj * root
                node = 1
                for _ in range(depth):
                    node *= 2
                    left = nodes[node]
                    if target > left:
                        target -= left
                        node += 1
                out[j] = node - cap
            return out
        nodes = self._nodes
        root = nodes[1]
        if root <= 0.0:
            raise ValueError("all weights are zero")
        target = np.asarray(u, dtype=np.float64) * root
        node = np.ones(target.shape, dtype=np.intp)
        for _ in range(self._depth):
            node *= 2
            left = nodes[node]
            go_right = target > left
            np.subtract(target, left, out=target, where=go_right)
            node += go_right
        return node - self._capacity
