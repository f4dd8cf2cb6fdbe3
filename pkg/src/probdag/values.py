"""Beliefs over optimal values: boundary composition and interior backups."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .dag import Kind
from .delta import DeltaTable
from .extremal import (
    STANDARD_PRIOR,
    ExtremalPrior,
    GaussianBelief,
    extremum_of_set,
    fold_extremum_arrays,
)

__all__ = [
    "BackupConfig",
    "boundary_value",
    "backup_ep",
    "backup_softmax",
    "softmax_weights",
    "summary_child",
    "ValueBeliefs",
]

SOFTMAX_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class BackupConfig:
    rule: str = "ep"  # "ep" or "softmax"
    regularizer: ExtremalPrior = STANDARD_PRIOR
    summary_enabled: bool = True

    def __post_init__(self):
        if self.rule not in ("ep", "softmax"):
            raise ValueError(f"unknown backup rule {self.rule!r}")


def boundary_value(g: GaussianBelief, delta: GaussianBelief) -> GaussianBelief:
    return GaussianBelief(g.mean + delta.mean, g.variance + delta.variance)


def backup_ep(children: Sequence[GaussianBelief], kind: Kind,
              config: BackupConfig = BackupConfig()) -> GaussianBelief:
    """Moment-matched extremum of independent children."""
    if not children:
        raise ValueError("backup needs at least one child")
    return extremum_of_set(list(children), None, config.regularizer,
                           "max" if kind == Kind.MAX else "min")


def _softmax_rows(means, variances, mask, sign):
    """Row-wise softmax backup of (rows, b) arrays; ``sign`` -1 for MIN rows."""
    mu = sign * means
    sd = np.sqrt(np.maximum(variances, SOFTMAX_VAR_FLOOR))
    top = np.max(np.where(mask, mu, -np.inf), axis=1, keepdims=True)
    u = np.where(mask, np.exp(-(top - mu) / sd), 0.0)
    w = u / u.sum(axis=1, keepdims=True)
    mean = sign * np.sum(w * np.where(mask, mu, 0.0), axis=1)
    var = np.sum(w * w * np.where(mask, variances, 0.0), axis=1)
    return mean, var, w


def softmax_weights(children: Sequence[GaussianBelief], kind: Kind = Kind.MAX) -> np.ndarray:
    m = np.array([[c.mean for c in children]])
    v = np.array([[c.variance for c in children]])
    return _softmax_rows(m, v, np.ones_like(m, dtype=bool), float(kind))[2][0]


def backup_softmax(children: Sequence[GaussianBelief], kind: Kind) -> GaussianBelief:
    """Softmax-weighted average: ``w_i ∝ exp(-(mu_max - mu_i) / sigma_i)``."""
    if not children:
        raise ValueError("backup needs at least one child")
    m = np.array([[c.mean for c in children]])
    v = np.array([[c.variance for c in children]])
    mean, var, _ = _softmax_rows(m, v, np.ones_like(m, dtype=bool), float(kind))
    return GaussianBelief(float(mean[0]), float(var[0]))


def summary_child(parent_g: GaussianBelief, table: DeltaTable, parent_remaining_depth: int,
                  unexplored_count: int) -> Optional[GaussianBelief]:
    """Stand-in for the extremum over a parent's unexplored children."""
    if unexplored_count <= 0:
        return None
    return boundary_value(parent_g, table.summary_delta(parent_remaining_depth, unexplored_count))


class _Level:
    __slots__ = ("ids", "children", "signs", "_cache")

    def __init__(self):
        self.ids: List[int] = []
        self.children: List[Sequence[int]] = []
        self.signs: List[float] = []
        self._cache = None

    def arrays(self):
        if self._cache is None:
            width = max(len(c) for c in self.children)
            mat = np.full((len(self.ids), width), -1, dtype=np.int64)
            for r, kids in enumerate(self.children):
                mat[r, : len(kids)] = kids
            self._cache = (np.asarray(self.ids, dtype=np.int64), mat,
                           np.asarray(self.signs, dtype=float))
        return self._cache


class ValueBeliefs:
    """Optimal-value beliefs for every node of one search.

    Boundary and terminal entries are written by the search; interior
    entries are recomputed from their children, deepest level first.
    """

    def __init__(self, config: BackupConfig):
        self.config = config
        self.mean = np.zeros(0)
        self.var = np.zeros(0)
        self._levels: Dict[int, _Level] = {}
        self._interior_level: Dict[int, int] = {}
        self._summary_nodes: Dict[int, Callable[[], Optional[GaussianBelief]]] = {}
        self.recomputations = 0

    def ensure(self, n_nodes: int) -> None:
        if self.mean.shape[0] < n_nodes:
            cap = max(n_nodes, 2 * self.mean.shape[0], 64)
            m = np.zeros(cap)
            v = np.zeros(cap)
            m[: self.mean.shape[0]] = self.mean
            v[: self.var.shape[0]] = self.var
            self.mean, self.var = m, v

    def belief(self, node_id: int) -> GaussianBelief:
        return GaussianBelief(float(self.mean[node_id]), max(float(self.var[node_id]), 0.0))

    def set_values(self, ids, means, variances) -> None:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size:
            self.ensure(int(ids.max()) + 1)
        self.mean[ids] = means
        self.var[ids] = variances

    def register_interior(self, node_id: int, level: int, children: Sequence[int], kind: Kind,
                          summary: Optional[Callable[[], Optional[GaussianBelief]]] = None) -> None:
        """Declare ``node_id`` interior with fixed ``children``.

        ``summary`` returns the unexplored-children stand-in (or None).
        """
        if not children:
            raise ValueError("interior nodes need children")
        lv = self._levels.setdefault(level, _Level())
        lv.ids.append(node_id)
        lv.children.append(tuple(children))
        lv.signs.append(float(kind))
        lv._cache = None
        self._interior_level[node_id] = level
        if summary is not None and self.config.summary_enabled:
            self._summary_nodes[node_id] = summary

    def is_interior(self, node_id: int) -> bool:
        return node_id in self._interior_level

    def refresh(self, n_nodes: int, changed: Optional[Iterable[int]] = None) -> int:
        """Recompute interior beliefs above ``changed`` nodes (all if None).

        Returns the number of interior nodes recomputed.
        """
        self.ensure(n_nodes)
        dirty = None
        if changed is not None:
            dirty = np.zeros(n_nodes, dtype=bool)
            ch = np.fromiter(changed, dtype=np.int64)
            if ch.size == 0:
                return 0
            dirty[ch] = True
        count = 0
        for level in sorted(self._levels, reverse=True):
            ids, mat, signs = self._levels[level].arrays()
            if dirty is None:
                rows = np.arange(ids.size)
            else:
                safe = np.where(mat >= 0, mat, 0)
                rows = np.nonzero((dirty[safe] & (mat >= 0)).any(axis=1))[0]
                if rows.size == 0:
                    continue
            count += self._recompute(ids[rows], mat[rows], signs[rows])
            if dirty is not None:
                dirty[ids[rows]] = True
        self.recomputations += count
        return count

    def _recompute(self, ids, mat, signs) -> int:
        mask = mat >= 0
        safe = np.where(mask, mat, 0)
        means = self.mean[safe]
        variances = self.var[safe]
        if self._summary_nodes:
            extra_m = np.zeros(ids.size)
            extra_v = np.zeros(ids.size)
            extra = np.zeros(ids.size, dtype=bool)
            for r, node in enumerate(ids.tolist()):
                fn = self._summary_nodes.get(node)
                s = fn() if fn is not None else None
                if s is not None:
                    extra_m[r], extra_v[r], extra[r] = s.mean, s.variance, True
            if extra.any():
                # summary appended after the stored children
                means = np.concatenate([means, extra_m[:, None]], axis=1)
                variances = np.concatenate([variances, extra_v[:, None]], axis=1)
                mask = np.concatenate([mask, extra[:, None]], axis=1)
                means, variances, mask = _left_pack(means, variances, mask)
        for sign in (1.0, -1.0):
            sel = signs == sign
            if not sel.any():
                continue
            if self.config.rule == "ep":
                m, v = fold_extremum_arrays(
                    means[sel], variances[sel], mask[sel], self.config.regularizer.params,
                    "max" if sign > 0 else "min",
                )
            else:
                m, v, _ = _softmax_rows(means[sel], variances[sel], mask[sel], sign)
            self.mean[ids[sel]] = m
            self.var[ids[sel]] = v
        return int(ids.size)


def _left_pack(means, variances, mask):
    order = np.argsort(~mask, axis=1, kind="stable")
    return (np.take_along_axis(means, order, axis=1),
            np.take_along_axis(variances, order, axis=1),
            np.take_along_axis(mask, order, axis=1))
