"""Synthetic bag DAG whose leaf rewards are one draw from the model prior."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Dict, Tuple

import numpy as np

from .bags import BagDomain, BagOverlapKernel, Bag, bag_key


@dataclass(frozen=True)
class SyntheticSpec:
    N: int = 15
    m: int = 5
    seed: int = 0


def synthetic_kernel(N: int, m: int, scale: float = 1.0, jitter: float = 0.0) -> BagOverlapKernel:
    """``Sigma(x1, x2) = (|x1 & x2| + 1) / (m + 1)``."""
    return BagOverlapKernel(N, offset=1.0, norm=m + 1.0, scale=scale, jitter=jitter)


@lru_cache(maxsize=8)
def _leaf_factor(N: int, m: int) -> Tuple[Tuple[Bag, ...], np.ndarray, float]:
    leaves = tuple(combinations(range(N), m))
    kern = synthetic_kernel(N, m)
    phi = kern.features([bag_key(b) for b in leaves])
    gram = phi @ phi.T
    jitter = 1e-10
    # the overlap Gram has rank N + 1, so a small jitter is always needed
    while True:
        try:
            L = np.linalg.cholesky(gram + jitter * np.eye(len(leaves)))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > 1e-2:
                raise
    L.setflags(write=False)
    return leaves, L, jitter


def synthetic_ground_truth(spec: SyntheticSpec) -> Dict[Bag, float]:
    """Map every size-m bag to its reward, one N(0, Sigma) sample per seed."""
    leaves, L, _ = _leaf_factor(spec.N, spec.m)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5EED]))
    rewards = L @ rng.standard_normal(len(leaves))
    return dict(zip(leaves, rewards.tolist()))


def ground_truth_samples(N: int, m: int, seeds) -> np.ndarray:
    """Rewards for several ground-truth seeds at once, shape (len(seeds), leaves)."""
    leaves, L, _ = _leaf_factor(N, m)
    Z = np.stack([
        np.random.default_rng(np.random.SeedSequence([s, 0x5EED])).standard_normal(len(leaves))
        for s in seeds
    ])
    return Z @ L.T


class SyntheticDomain(BagDomain):
    name = "synthetic"

    def __init__(self, spec: SyntheticSpec = SyntheticSpec()):
        super().__init__(spec.N, spec.m)
        self.spec = spec
        self._rewards = synthetic_ground_truth(spec)

    def terminal_reward(self, state: Bag) -> float:
        return self._rewards[tuple(state)]

    def kernel(self, scale: float = 1.0, jitter: float = 0.0) -> BagOverlapKernel:
        return synthetic_kernel(self.N, self.k, scale=scale, jitter=jitter)

    def best_leaf(self) -> Tuple[Bag, float]:
        bag = max(self._rewards, key=self._rewards.__getitem__)
        return bag, self._rewards[bag]

    def describe(self) -> dict:
        return {"name": self.name, "N": self.N, "m": self.k, "ground_truth_seed": self.spec.seed}
