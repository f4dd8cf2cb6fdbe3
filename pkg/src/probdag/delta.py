"""Per-level beliefs over the optimal increment of unexplored subtrees.

The unexplored part below a boundary node is modelled as a tree in which
each child's generative score is the parent's plus an independent
N(0, step_variance) step.  The gain of optimal over random continuation
then obeys ``delta(L+1) = ext_{b copies}(delta(L) + step)`` with
``delta(0) = 0``; because branching is constant per level one belief per
level suffices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from .dag import Kind
from .extremal import NO_PRIOR, ExtremalPrior, GaussianBelief, fold_extremum_arrays

__all__ = ["DeltaConfig", "DeltaTable", "build_delta_table", "delta_for_boundary_node"]


@dataclass(frozen=True)
class DeltaConfig:
    """``branching[L]`` and ``kinds[L]`` describe nodes L+1 levels above the leaves."""

    depth: int
    branching: Tuple[int, ...]
    step_variance: float
    kinds: Tuple[Kind, ...]
    prior: ExtremalPrior = NO_PRIOR

    def __post_init__(self):
        object.__setattr__(self, "branching", tuple(int(b) for b in self.branching))
        object.__setattr__(self, "kinds", tuple(Kind(k) for k in self.kinds))
        if self.depth < 1:
            raise ValueError("depth must be positive")
        if len(self.branching) != self.depth or len(self.kinds) != self.depth:
            raise ValueError("branching and kinds need one entry per level")
        if any(b < 1 for b in self.branching):
            raise ValueError("branching factors must be positive")
        if not (np.isfinite(self.step_variance) and self.step_variance > 0):
            raise ValueError("step_variance must be finite and positive")

    @classmethod
    def for_domain(cls, domain, step_variance: float, prior: ExtremalPrior = NO_PRIOR):
        depth = domain.max_depth()
        levels = [depth - 1 - L for L in range(depth)]
        return cls(
            depth=depth,
            branching=tuple(domain.branching(lv) for lv in levels),
            step_variance=step_variance,
            kinds=tuple(domain.node_kind(lv) for lv in levels),
            prior=prior,
        )

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "branching": list(self.branching),
            "step_variance": self.step_variance,
            "kinds": [k.name for k in self.kinds],
            "prior": None if self.prior.belief is None else list(self.prior.params),
            "kind_convention": "kinds[L] is the kind of a node L+1 levels above the leaves",
        }


@dataclass(frozen=True)
class DeltaTable:
    config: DeltaConfig
    entries: Tuple[GaussianBelief, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, remaining_depth: int) -> GaussianBelief:
        return self.entries[remaining_depth]

    @property
    def means(self) -> np.ndarray:
        return np.array([e.mean for e in self.entries])

    @property
    def variances(self) -> np.ndarray:
        return np.array([e.variance for e in self.entries])

    def summary_delta(self, remaining_depth: int, options: int) -> GaussianBelief:
        """Increment at ``remaining_depth`` if only ``options`` children were available."""
        return _summary_delta(self, remaining_depth, options)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "entries": [[e.mean, e.variance] for e in self.entries],
        }


def _extremum_of_copies(base: GaussianBelief, count: int, step: float, kind: Kind,
                        prior: ExtremalPrior) -> GaussianBelief:
    shifted_mean = np.full((1, count), base.mean)
    shifted_var = np.full((1, count), base.variance + step)
    m, v = fold_extremum_arrays(
        shifted_mean, shifted_var, prior=prior.params,
        kind="max" if kind == Kind.MAX else "min",
    )
    return GaussianBelief(float(m[0]), float(v[0]))


def build_delta_table(config: DeltaConfig) -> DeltaTable:
    entries: List[GaussianBelief] = [GaussianBelief(0.0, 0.0)]
    for L in range(config.depth):
        entries.append(_extremum_of_copies(
            entries[L], config.branching[L], config.step_variance, config.kinds[L], config.prior,
        ))
    return DeltaTable(config, tuple(entries))


def delta_for_boundary_node(table: DeltaTable, remaining_depth: int) -> GaussianBelief:
    if not 0 <= remaining_depth < len(table):
        raise IndexError(f"remaining depth {remaining_depth} outside [0, {len(table) - 1}]")
    e = table.entries[remaining_depth]
    return GaussianBelief(e.mean, e.variance)


@lru_cache(maxsize=4096)
def _summary_delta(table: DeltaTable, remaining_depth: int, options: int) -> GaussianBelief:
    if remaining_depth < 1:
        raise ValueError("a summary needs a node with at least one level below it")
    if options < 1:
        raise ValueError("a summary needs at least one unexplored option")
    cfg = table.config
    L = remaining_depth - 1
    return _extremum_of_copies(table.entries[L], options, cfg.step_variance, cfg.kinds[L], cfg.prior)
