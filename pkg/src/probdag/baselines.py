"""Count-based baselines: UCT on the tree, UCD on the DAG and UCT-RAVE.

All three share the SearchDag store and the domain interface with the
probabilistic engine.  Rewards are stored from the MAX player's point of
view; MIN nodes mirror the selection rule.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .dag import SearchDag, Status
from .engine import IterationRecord, RunTrace, SearchError, make_streams, rollout
from .posterior import standardize_from_pilot

__all__ = [
    "CountStats",
    "RaveStats",
    "RaveConfig",
    "BaselineConfig",
    "CountSearch",
    "uct_select",
    "backprop",
    "rave_update",
    "rave_select",
    "run_baseline",
]


class CountStats:
    """Visit counts, reward sums and squared sums per node id."""

    def __init__(self):
        self.n = np.zeros(0, dtype=np.int64)
        self.total = np.zeros(0)
        self.sq = np.zeros(0)

    def ensure(self, size: int) -> None:
        cap = self.n.shape[0]
        if size > cap:
            new = max(size, 2 * cap, 64)
            for name in ("n", "total", "sq"):
                old = getattr(self, name)
                arr = np.zeros(new, dtype=old.dtype)
                arr[:cap] = old
                setattr(self, name, arr)

    def update(self, node_id: int, reward: float) -> None:
        self.ensure(node_id + 1)
        self.n[node_id] += 1
        self.total[node_id] += reward
        self.sq[node_id] += reward * reward

    def mean(self, ids) -> np.ndarray:
        ids = np.asarray(ids)
        n = self.n[ids]
        return np.where(n > 0, self.total[ids] / np.maximum(n, 1), 0.0)

    def variance(self, ids) -> np.ndarray:
        """Empirical (population) variance; zero for fewer than two visits."""
        ids = np.asarray(ids)
        n = np.maximum(self.n[ids], 1)
        m = self.total[ids] / n
        return np.where(self.n[ids] > 1, np.maximum(self.sq[ids] / n - m * m, 0.0), 0.0)


@dataclass(frozen=True)
class RaveConfig:
    c1: float = 1e-4
    c2: float = 1e4
    c3: float = 1e4

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) <= 0:
            raise ValueError("RAVE constants must be positive")


class RaveStats:
    """Global (per feature) and local (per node and feature) reward averages."""

    def __init__(self, n_features: int, config: RaveConfig = RaveConfig()):
        self.config = config
        self.g_sum = np.zeros(n_features)
        self.g_n = np.zeros(n_features, dtype=np.int64)
        self.l_sum: Dict[int, np.ndarray] = {}
        self.l_n: Dict[int, np.ndarray] = {}

    def global_mean(self, features) -> np.ndarray:
        f = np.asarray(features)
        return np.where(self.g_n[f] > 0, self.g_sum[f] / np.maximum(self.g_n[f], 1), 0.0)

    def local(self, node_id: int, features) -> Tuple[np.ndarray, np.ndarray]:
        f = np.asarray(features)
        if node_id not in self.l_n:
            return np.zeros(f.shape), np.zeros(f.shape, dtype=np.int64)
        n = self.l_n[node_id][f]
        return np.where(n > 0, self.l_sum[node_id][f] / np.maximum(n, 1), 0.0), n


def rave_update(stats: RaveStats, path: Sequence[int], terminal_bag: Sequence[int],
                reward: float) -> RaveStats:
    bag = np.asarray(sorted(set(terminal_bag)), dtype=np.int64)
    stats.g_sum[bag] += reward
    stats.g_n[bag] += 1
    size = stats.g_sum.shape[0]
    for node in dict.fromkeys(path):
        if node not in stats.l_n:
            stats.l_sum[node] = np.zeros(size)
            stats.l_n[node] = np.zeros(size, dtype=np.int64)
        stats.l_sum[node][bag] += reward
        stats.l_n[node][bag] += 1
    return stats


def uct_select(parent_visits: int, child_ids: Sequence[int], stats: CountStats, beta: float,
               sign: float = 1.0) -> int:
    """Unvisited children first (lowest id), then the UCB1 maximiser."""
    kids = np.asarray(child_ids)
    if kids.size == 0:
        raise ValueError("no children to select from")
    stats.ensure(int(kids.max()) + 1)
    n = stats.n[kids]
    if (n == 0).any():
        return int(kids[n == 0].min())
    log_n = math.log(parent_visits) if parent_visits > 0 else 0.0
    score = sign * stats.mean(kids) + beta * np.sqrt(log_n / n)
    return int(kids[score == score.max()].min())


def rave_select(parent_id: int, parent_visits: int, child_ids: Sequence[int],
                child_features: Sequence[int], counts: CountStats, rave: RaveStats,
                config: Optional[RaveConfig] = None) -> int:
    """Blend of UCB statistics and RAVE averages.

    Fresh children count as ``mu = 0``, ``sigma^2 = 0`` and ``n = 1`` inside
    the exploration term; with no local data ``beta = 1``.
    """
    cfg = config or rave.config
    kids = np.asarray(child_ids)
    feats = np.asarray(child_features)
    counts.ensure(int(kids.max()) + 1)
    n = counts.n[kids]
    mu = counts.mean(kids)
    var = counts.variance(kids)
    alpha = cfg.c2 / (cfg.c2 + n)
    l_mean, l_n = rave.local(parent_id, feats)
    beta = cfg.c3 / (cfg.c3 + l_n)
    g_mean = rave.global_mean(feats)
    n_eff = np.maximum(n, 1)
    log_n = math.log(parent_visits) if parent_visits > 1 else 0.0
    explore = np.sqrt(cfg.c1 * log_n / n_eff * np.minimum(0.25, var + np.sqrt(2.0 * log_n / n_eff)))
    score = (1 - alpha) * mu + alpha * ((1 - beta) * l_mean + beta * g_mean) + explore
    return int(kids[score == score.max()].min())


def backprop(mode: str, dag: SearchDag, path: Sequence[int], terminal_key: bytes, reward: float,
             stats: CountStats) -> CountStats:
    """Running-mean update of the traversed path.

    On a tree (UCT) the path holds every ancestor; on the DAG (UCD) other
    parents of a path node are deliberately left alone.
    """
    if mode not in ("uct", "ucd"):
        raise ValueError(f"unknown backup mode {mode!r}")
    for node in path:
        stats.update(node, reward)
    return stats


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "uct"  # uct | ucd | uct-rave
    beta: float = 1.0
    budget: int = 500
    seed: int = 0
    pilot_rollouts: int = 0
    rave: RaveConfig = RaveConfig()

    def __post_init__(self):
        if self.method not in ("uct", "ucd", "uct-rave"):
            raise ValueError(f"unknown baseline {self.method!r}")
        if self.beta < 0 or self.budget < 0:
            raise ValueError("beta and budget must be nonnegative")

    @property
    def representation(self) -> str:
        return "dag" if self.method == "ucd" else "tree"

    def to_dict(self) -> dict:
        return asdict(self)


class CountSearch:
    """UCT-family search sharing the engine's trace format."""

    def __init__(self, domain, config: BaselineConfig, streams=None):
        self.domain = domain
        self.config = config
        self.streams = streams or make_streams(config.seed)
        root = domain.root_state()
        self.dag = SearchDag(root, domain.key(root), domain.node_kind(domain.level(root)),
                             transpositions=config.representation == "dag")
        if domain.is_terminal(root):
            self.dag.mark_terminal(self.dag.root)
        self.stats = CountStats()
        self.rave = None
        if config.method == "uct-rave":
            self.rave = RaveStats(domain.N, config.rave)
        self.shift, self.scale = 0.0, 1.0
        self.iteration = 0
        self.best_reward = -math.inf
        self.best_state = None
        self.trace = RunTrace(config.to_dict())

    def _child_feature(self, parent: int, child: int) -> int:
        (f,) = set(self.dag[child].state) - set(self.dag[parent].state)
        return f

    def _select(self, node_id: int) -> int:
        node = self.dag[node_id]
        if self.rave is not None:
            feats = [self._child_feature(node_id, c) for c in node.children]
            return rave_select(node_id, node.visits, node.children, feats,
                               self.stats, self.rave, self.config.rave)
        return uct_select(node.visits, node.children, self.stats, self.config.beta,
                          float(node.kind))

    def pilot(self) -> None:
        n = self.config.pilot_rollouts
        if n <= 0:
            return
        rng = self.streams["pilot"]
        rewards = []
        for _ in range(n):
            res = rollout(self.domain, self.dag[self.dag.root].state, rng)
            rewards.append(res.reward)
            self._note_best(res)
        self.trace.pilot_rewards = rewards
        self.shift, self.scale = standardize_from_pilot(rewards)

    def _note_best(self, res) -> None:
        if res.reward > self.best_reward:
            self.best_reward = res.reward
            self.best_state = res.terminal_state

    def step(self) -> IterationRecord:
        dag = self.dag
        it = self.iteration
        try:
            node_id = dag.root
            dag[node_id].visits += 1
            path = [node_id]
            while dag[node_id].status == Status.INTERIOR:
                node_id = self._select(node_id)
                dag[node_id].visits += 1
                path.append(node_id)
            boundary = node_id
            if dag[node_id].status == Status.BOUNDARY:
                kids = dag.expand(node_id, self.domain)
                if kids:
                    node_id = self._select(node_id)
                    dag[node_id].visits += 1
                    path.append(node_id)
            res = rollout(self.domain, dag[node_id].state, self.streams["search"])
            std = (res.reward - self.shift) / self.scale
            mode = "ucd" if self.config.method == "ucd" else "uct"
            backprop(mode, dag, path, res.terminal_key, std, self.stats)
            if self.rave is not None:
                rave_update(self.rave, path, res.terminal_state, std)
            self._note_best(res)
        except Exception as exc:
            raise SearchError(f"iteration {it} failed: {exc}", it) from exc
        self.iteration += 1
        rec = IterationRecord(it, path, dag[boundary].key, res.terminal_key, res.reward, std,
                              self.best_reward)
        self.trace.records.append(rec)
        return rec

    def run(self, callback: Optional[Callable] = None) -> RunTrace:
        t0 = time.perf_counter()
        self.pilot()
        t1 = time.perf_counter()
        for _ in range(self.config.budget):
            self.step()
            if callback is not None:
                callback(self)
        t2 = time.perf_counter()
        self.trace.timings.update(pilot=t1 - t0, search=t2 - t1)
        self.trace.best_state = self.best_state
        self.trace.best_reward = self.best_reward
        return self.trace

    def recommend(self, node_id: Optional[int]) -> Optional[int]:
        """Visited child with the best empirical mean; None if there is none."""
        if node_id is None or not self.dag[node_id].children:
            return None
        node = self.dag[node_id]
        kids = np.asarray(node.children)
        self.stats.ensure(int(kids.max()) + 1)
        kids = kids[self.stats.n[kids] > 0]
        if kids.size == 0:
            return None
        score = float(node.kind) * self.stats.mean(kids)
        return int(kids[score == score.max()].min())


def run_baseline(domain, config: BaselineConfig, callback=None) -> RunTrace:
    return CountSearch(domain, config).run(callback)
