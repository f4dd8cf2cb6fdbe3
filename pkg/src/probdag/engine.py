"""Probabilistic search over a DAG of states.

Each iteration descends by an upper confidence bound over optimal-value
beliefs, expands the boundary node it reaches, rolls out uniformly at
random from it, conditions the generative posterior on the reward and
refreshes the value beliefs.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .dag import SearchDag, Status
from .delta import DeltaConfig, build_delta_table
from .extremal import NO_PRIOR, STANDARD_PRIOR, ExtremalPrior, GaussianBelief
from .posterior import FactorizationError, GaussianPosterior, standardize_from_pilot
from .values import BackupConfig, ValueBeliefs, summary_child

__all__ = [
    "SearchConfig",
    "RolloutResult",
    "IterationRecord",
    "RunTrace",
    "ProbabilisticSearch",
    "select_child",
    "rollout",
    "recommend",
    "recommend_state",
    "run",
    "make_streams",
    "SearchError",
]

MAX_JITTER = 1e-2
STREAMS = ("pilot", "search", "evaluation")


class SearchError(RuntimeError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class SearchConfig:
    beta: float = 1.0
    lam: float = 1e-4
    c: Optional[float] = None  # kernel scale; None takes the domain default
    rule: str = "ep"
    representation: str = "dag"
    budget: int = 500
    seed: int = 0
    pilot_rollouts: int = 0
    prior: Optional[ExtremalPrior] = STANDARD_PRIOR
    step_variance: Optional[float] = None
    summary_enabled: bool = True
    jitter: Optional[float] = None

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.c is not None and not self.c > 0:
            raise ValueError("c must be positive")
        if self.rule not in ("ep", "softmax"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.representation not in ("dag", "tree"):
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        if self.pilot_rollouts == 1:
            raise ValueError("standardisation needs at least two pilot rollouts")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prior"] = None if self.prior is None or self.prior.belief is None else list(self.prior.params)
        return d


@dataclass(frozen=True)
class RolloutResult:
    terminal_state: object
    terminal_key: bytes
    reward: float
    steps: int


@dataclass
class IterationRecord:
    iteration: int
    path: List[int]
    boundary_key: bytes
    terminal_key: bytes
    reward: float
    standardized: float
    best_so_far: float


@dataclass
class RunTrace:
    config: dict
    records: List[IterationRecord] = field(default_factory=list)
    pilot_rewards: List[float] = field(default_factory=list)
    evaluations: List[tuple] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    best_state: object = None
    best_reward: float = -math.inf

    def best_curve(self) -> np.ndarray:
        return np.array([r.best_so_far for r in self.records])

    def rows(self) -> List[tuple]:
        return [(r.iteration, r.boundary_key.hex(), r.terminal_key.hex(), repr(r.reward),
                 repr(r.standardized), repr(r.best_so_far)) for r in self.records]


def make_streams(seed: int, names: Sequence[str] = STREAMS) -> Dict[str, np.random.Generator]:
    """One independent PCG64 generator per run phase, derived from ``seed``."""
    children = np.random.SeedSequence(int(seed)).spawn(len(names))
    return {n: np.random.Generator(np.random.PCG64(s)) for n, s in zip(names, children)}


def ucb_scores(means, variances, kinds, parent_visits: int, beta: float) -> np.ndarray:
    """Signed UCB: larger is better for the parent (MIN parents negate)."""
    log_n = math.log(parent_visits) if parent_visits > 1 else 0.0
    bonus = beta * np.sqrt(log_n * np.maximum(variances, 0.0))
    return kinds * means + bonus


def select_child(dag: SearchDag, values: ValueBeliefs, node_id: int, beta: float) -> int:
    node = dag[node_id]
    if not node.children:
        raise ValueError(f"node {node_id} has no explored children")
    kids = np.asarray(node.children)
    scores = ucb_scores(values.mean[kids], values.var[kids], float(node.kind), node.visits, beta)
    best = scores.max()
    # lowest id among the maximisers
    return int(kids[scores == best].min())


def rollout(domain, state, rng: np.random.Generator) -> RolloutResult:
    steps = 0
    while not domain.is_terminal(state):
        state = domain.random_successor(state, rng)
        steps += 1
    return RolloutResult(state, domain.key(state), float(domain.terminal_reward(state)), steps)


def recommend(values: ValueBeliefs, dag: SearchDag, node_id: Optional[int]) -> Optional[int]:
    """MAP choice: the explored child with the best value mean.

    Returns None for an unexplored node (absent or never expanded); see
    :func:`recommend_state` for the random fallback.
    """
    if node_id is None or not dag[node_id].children:
        return None
    node = dag[node_id]
    kids = np.asarray(node.children)
    score = float(node.kind) * values.mean[kids]
    return int(kids[score == score.max()].min())


def recommend_state(search, node_id: Optional[int], state, rng: np.random.Generator):
    """Successor state chosen by ``search.recommend``, uniform if unexplored."""
    child = search.recommend(node_id)
    if child is None:
        return search.domain.random_successor(state, rng)
    return search.dag[child].state


class ProbabilisticSearch:
    """One search instance: DAG, posterior, Δ table and value beliefs."""

    def __init__(self, domain, config: SearchConfig, streams=None):
        self.domain = domain
        self.config = config
        self.streams = streams or make_streams(config.seed)
        prior = config.prior if config.prior is not None else NO_PRIOR
        kw = {}
        if config.c is not None:
            kw["scale"] = config.c
        if config.jitter is not None:
            kw["jitter"] = config.jitter
        self.kernel = domain.kernel(**kw)
        step = config.step_variance
        if step is None:
            step = self.kernel.scale * self.kernel.level_variance
        self.delta = build_delta_table(DeltaConfig.for_domain(domain, step, prior))
        self.backup = BackupConfig(config.rule, prior, config.summary_enabled)
        self.values = ValueBeliefs(self.backup)
        self.posterior = GaussianPosterior(self.kernel, config.lam)
        root = domain.root_state()
        self.dag = SearchDag(root, domain.key(root), domain.node_kind(domain.level(root)),
                             transpositions=config.representation == "dag")
        self.shift, self.scale = 0.0, 1.0
        self.iteration = 0
        self.best_reward = -math.inf
        self.best_state = None
        self.trace = RunTrace(config.to_dict())
        # per node arrays
        self._pidx = np.zeros(0, dtype=np.int64)
        self._dm = np.zeros(0)
        self._dv = np.zeros(0)
        self._frontier = np.zeros(0, dtype=bool)
        self._remaining = np.zeros(0, dtype=np.int64)
        self._register_nodes([self.dag.root])
        if domain.is_terminal(root):
            self.dag.mark_terminal(self.dag.root)
        self._refresh_frontier(full=True)

    # ----------------------------------------------------------- node arrays
    def _grow(self, n):
        cap = self._pidx.shape[0]
        if n <= cap:
            return
        new = max(n, 2 * cap, 64)

        def g(a):
            out = np.zeros(new, dtype=a.dtype)
            out[:cap] = a
            return out

        self._pidx, self._dm, self._dv = g(self._pidx), g(self._dm), g(self._dv)
        self._frontier, self._remaining = g(self._frontier), g(self._remaining)
        self.values.ensure(new)

    def _register_nodes(self, ids: Sequence[int]) -> None:
        if not ids:
            return
        self._grow(max(ids) + 1)
        keys = [self.dag[i].key for i in ids]
        idx = self.posterior.track(keys)
        for j, nid in enumerate(ids):
            node = self.dag[nid]
            terminal = node.status == Status.TERMINAL or self.domain.is_terminal(node.state)
            rem = 0 if terminal else self.domain.max_depth() - node.level
            d = self.delta[rem]
            self._pidx[nid] = idx[j]
            self._dm[nid] = d.mean
            self._dv[nid] = d.variance
            self._remaining[nid] = rem
            self._frontier[nid] = True

    def _refresh_frontier(self, full=False, extra_changed=()):
        """Recompute boundary beliefs from g + Δ, then the interior."""
        n = len(self.dag)
        ids = np.nonzero(self._frontier[:n])[0]
        pm = self.posterior.tracked_means
        pv = self.posterior.tracked_variances
        p = self._pidx[ids]
        mean = pm[p] + self._dm[ids]
        var = pv[p] + self._dv[ids]
        if full:
            changed = None
        else:
            old_m = self.values.mean[ids]
            old_v = self.values.var[ids]
            moved = (old_m != mean) | (old_v != var)
            changed = np.concatenate([ids[moved], np.asarray(extra_changed, dtype=np.int64)])
        self.values.set_values(ids, mean, var)
        return self.values.refresh(n, changed)

    # ------------------------------------------------------------- summary
    def _summary_fn(self, node_id: int, total_children: int):
        node = self.dag[node_id]
        remaining = self.domain.max_depth() - node.level

        def fn():
            unexplored = total_children - len(node.children)
            if unexplored <= 0:
                return None
            i = self._pidx[node_id]
            g = GaussianBelief(float(self.posterior.tracked_means[i]),
                               float(self.posterior.tracked_variances[i]))
            return summary_child(g, self.delta, remaining, unexplored)

        return fn

    # ------------------------------------------------------------- phases
    def pilot(self) -> None:
        n = self.config.pilot_rollouts
        if n <= 0:
            return
        rng = self.streams["pilot"]
        root = self.dag[self.dag.root].state
        rewards = []
        for _ in range(n):
            res = rollout(self.domain, root, rng)
            rewards.append(res.reward)
            self._note_best(res)
        self.trace.pilot_rewards = rewards
        self.shift, self.scale = standardize_from_pilot(rewards)

    def _note_best(self, res: RolloutResult) -> None:
        if res.reward > self.best_reward:
            self.best_reward = res.reward
            self.best_state = res.terminal_state

    def _observe(self, key: bytes, value: float) -> None:
        while True:
            try:
                self.posterior.add_observation(key, value)
                return
            except FactorizationError:
                jitter = max(self.kernel.jitter * 10.0, 1e-8)
                if jitter > MAX_JITTER:
                    raise
                # rebuild from the log with more diagonal jitter
                self.kernel = self.kernel.with_jitter(jitter)
                self.posterior = self.posterior.rebuilt(self.kernel)

    def descend(self) -> List[int]:
        dag = self.dag
        node_id = dag.root
        dag[node_id].visits += 1
        path = [node_id]
        while dag[node_id].status == Status.INTERIOR:
            node_id = select_child(dag, self.values, node_id, self.config.beta)
            dag[node_id].visits += 1
            path.append(node_id)
        return path

    def step(self) -> IterationRecord:
        dag = self.dag
        it = self.iteration
        try:
            path = self.descend()
            b = path[-1]
            before = len(dag)
            changed = []
            if dag[b].status == Status.BOUNDARY:
                n_succ = self.domain.branching(dag[b].level)
                kids = dag.expand(b, self.domain)
                self._register_nodes(list(range(before, len(dag))))
                if kids:
                    self._frontier[b] = False
                    # expansion inserts every successor, so a summary is only
                    # needed when the domain reports more moves than it yields
                    summary = None
                    if self.backup.summary_enabled and n_succ > len(kids):
                        summary = self._summary_fn(b, n_succ)
                    self.values.register_interior(b, dag[b].level, kids, dag[b].kind, summary)
                    changed.append(b)
                else:
                    self._remaining[b] = 0
                    self._dm[b] = self._dv[b] = 0.0
            res = rollout(self.domain, dag[b].state, self.streams["search"])
            std = (res.reward - self.shift) / self.scale
            self._observe(res.terminal_key, std)
            self._note_best(res)
            # new nodes and the converted node always need their beliefs set
            changed.extend(range(before, len(dag)))
            self._refresh_frontier(extra_changed=changed)
        except SearchError:
            raise
        except Exception as exc:
            raise SearchError(f"iteration {it} failed: {exc}", it) from exc
        self.iteration += 1
        rec = IterationRecord(it, path, dag[b].key, res.terminal_key, res.reward, std,
                              self.best_reward)
        self.trace.records.append(rec)
        return rec

    def run(self, callback: Optional[Callable[["ProbabilisticSearch"], None]] = None) -> RunTrace:
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

    # ------------------------------------------------------------- queries
    def value(self, node_id: int) -> GaussianBelief:
        return self.values.belief(node_id)

    def generative(self, node_id: int) -> GaussianBelief:
        i = self._pidx[node_id]
        return GaussianBelief(float(self.posterior.tracked_means[i]),
                              float(self.posterior.tracked_variances[i]))

    def recommend(self, node_id: Optional[int]) -> Optional[int]:
        return recommend(self.values, self.dag, node_id)


def run(domain, config: SearchConfig, callback=None) -> RunTrace:
    return ProbabilisticSearch(domain, config).run(callback)
