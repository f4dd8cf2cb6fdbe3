"""Common interface of the search problems."""

from __future__ import annotations

import abc
from typing import Any, List, Sequence

import numpy as np

from ..dag import Kind
from ..posterior import Kernel


class Domain(abc.ABC):
    """A leveled search space: every edge goes from level L to level L + 1."""

    name = "domain"
    adversarial = False

    @abc.abstractmethod
    def root_state(self) -> Any: ...

    @abc.abstractmethod
    def successors(self, state) -> List[Any]:
        """Children in a deterministic order; empty for terminal states."""

    @abc.abstractmethod
    def is_terminal(self, state) -> bool: ...

    @abc.abstractmethod
    def terminal_reward(self, state) -> float: ...

    @abc.abstractmethod
    def key(self, state) -> bytes: ...

    @abc.abstractmethod
    def level(self, state) -> int: ...

    @abc.abstractmethod
    def max_depth(self) -> int: ...

    @abc.abstractmethod
    def branching(self, level: int) -> int:
        """Branching factor of non-terminal nodes at ``level``."""

    @abc.abstractmethod
    def kernel(self) -> Kernel: ...

    def node_kind(self, level: int) -> Kind:
        return Kind.MAX

    def branching_profile(self) -> List[int]:
        """Branching factors from the leaves upward (distance 1, 2, ...)."""
        d = self.max_depth()
        return [self.branching(d - 1 - L) for L in range(d)]

    def remaining_depth(self, state) -> int:
        if self.is_terminal(state):
            return 0
        return self.max_depth() - self.level(state)

    def random_successor(self, state, rng: np.random.Generator):
        succ = self.successors(state)
        return succ[int(rng.integers(len(succ)))]

    def terminal_states(self) -> Sequence[Any]:
        """All terminal states, for exhaustive oracles (small domains only)."""
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name}
