"""Feature-bag search spaces: states are subsets of {0, ..., N-1}.

Bags are stored as sorted tuples, so insertion order never matters and two
orders of adding the same features reach the same state.  Keys are the
sorted indices packed as little-endian uint16.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from ..posterior import FeatureKernel
from .base import Domain

Bag = Tuple[int, ...]


def bag_key(bag: Bag) -> bytes:
    return np.sort(np.asarray(bag, dtype="<u2")).tobytes()


def key_bag(key: bytes) -> Bag:
    return tuple(int(i) for i in np.frombuffer(key, dtype="<u2"))


class BagOverlapKernel(FeatureKernel):
    """``Sigma(a, b) = (|a & b| + offset) / norm + white [a == b]``."""

    def __init__(self, n_features: int, offset: float = 0.0, norm: float = 1.0,
                 white: float = 0.0, scale: float = 1.0, jitter: float = 0.0):
        super().__init__(scale=scale, jitter=jitter, white=white)
        self.N = int(n_features)
        self.offset = float(offset)
        self.norm = float(norm)
        self.level_variance = 1.0 / self.norm

    @property
    def n_features(self) -> int:
        return self.N + (1 if self.offset else 0)

    def feature_vector(self, key: bytes) -> np.ndarray:
        return self.features([key])[0]

    def features(self, keys) -> np.ndarray:
        out = np.zeros((len(keys), self.n_features))
        inv = 1.0 / np.sqrt(self.norm)
        for row, key in enumerate(keys):
            out[row, np.frombuffer(key, dtype="<u2")] = inv
        if self.offset:
            out[:, self.N] = np.sqrt(self.offset / self.norm)
        return out

    def cov(self, a: bytes, b: bytes) -> float:
        shared = len(set(key_bag(a)) & set(key_bag(b)))
        val = (shared + self.offset) / self.norm
        if a == b:
            val += self.white
        return val

    def describe(self) -> dict:
        d = super().describe()
        d.update(N=self.N, offset=self.offset, norm=self.norm, white=self.white)
        return d


class BagDomain(Domain):
    """Bags of at most ``k`` features out of ``N``; the full bags are terminal."""

    def __init__(self, n_features: int, bag_size: int):
        if not 1 <= bag_size <= n_features:
            raise ValueError("need 1 <= k <= N")
        if n_features > 65535:
            raise ValueError("feature indices must fit in uint16")
        self.N = int(n_features)
        self.k = int(bag_size)

    def root_state(self) -> Bag:
        return ()

    def successors(self, state: Bag) -> List[Bag]:
        if len(state) >= self.k:
            return []
        present = set(state)
        return [tuple(sorted(state + (f,))) for f in range(self.N) if f not in present]

    def random_successor(self, state: Bag, rng):
        present = sorted(state)
        # the j-th absent feature in increasing order
        j = int(rng.integers(self.N - len(present)))
        f = j
        for p in present:
            if p <= f:
                f += 1
            else:
                break
        return tuple(sorted(state + (f,)))

    def is_terminal(self, state: Bag) -> bool:
        return len(state) >= self.k

    def key(self, state: Bag) -> bytes:
        return bag_key(state)

    def level(self, state: Bag) -> int:
        return len(state)

    def max_depth(self) -> int:
        return self.k

    def branching(self, level: int) -> int:
        return self.N - level

    def terminal_states(self):
        from itertools import combinations

        return list(combinations(range(self.N), self.k))

    def describe(self) -> dict:
        return {"name": self.name, "N": self.N, "k": self.k}
