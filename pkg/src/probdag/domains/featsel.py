"""Feature subset selection: pick k of N features to maximise an oracle score."""

from __future__ import annotations

import abc
import subprocess
import threading
from typing import Callable, Optional, Sequence

import numpy as np

from .bags import Bag, BagDomain, BagOverlapKernel


class OracleError(RuntimeError):
    def __init__(self, message, bag=None):
        super().__init__(message)
        self.bag = bag


class RewardOracle(abc.ABC):
    deterministic = True
    concurrent_safe = True

    @abc.abstractmethod
    def evaluate(self, bag: Sequence[int]) -> float: ...

    def describe(self) -> dict:
        return {"type": type(self).__name__}


class FunctionOracle(RewardOracle):
    def __init__(self, fn: Callable[[Bag], float], name: str = "function"):
        self.fn = fn
        self.name = name

    def evaluate(self, bag):
        return float(self.fn(tuple(bag)))

    def describe(self) -> dict:
        return {"type": "FunctionOracle", "name": self.name}


class RedundancyOracle(RewardOracle):
    """Additive feature informativeness minus pairwise redundancy.

    Built to defeat greedy forward selection: a single "hub" feature is the
    most informative on its own but overlaps heavily with four partner
    features which together beat it.  The remaining features get random
    informativeness with redundancy between neighbours on a 1-d strip, like
    adjacent pixels.  The score is squashed into an accuracy-like (0, 1)
    range.
    """

    def __init__(self, n_features: int = 30, seed: int = 7, hub_value: float = 1.0,
                 partner_value: float = 0.8, hub_overlap: float = 0.5,
                 neighbour_overlap: float = 0.35, length: float = 1.5):
        if n_features < 10:
            raise ValueError("the reference task needs at least 10 features")
        self.N = n_features
        self.seed = seed
        rng = np.random.default_rng(seed)
        u = rng.uniform(0.2, 0.7, size=n_features)
        pos = np.arange(n_features, dtype=float)
        dist = np.abs(pos[:, None] - pos[None, :])
        R = neighbour_overlap * np.sqrt(np.outer(u, u)) * np.exp(-dist / length)
        np.fill_diagonal(R, 0.0)
        perm = rng.permutation(n_features)
        hub, partners = int(perm[0]), [int(p) for p in perm[1:5]]
        u[hub] = hub_value
        R[hub, :] = R[:, hub] = 0.0
        for p in partners:
            u[p] = partner_value
            R[p, :] = R[:, p] = 0.0
        for p in partners:
            R[hub, p] = R[p, hub] = hub_overlap
        self.informativeness = u
        self.redundancy = R
        self.hub = hub
        self.partners = tuple(sorted(partners))

    def score(self, bag) -> float:
        idx = np.asarray(bag, dtype=int)
        sub = self.redundancy[np.ix_(idx, idx)]
        return float(self.informativeness[idx].sum() - 0.5 * sub.sum())

    def evaluate(self, bag) -> float:
        return 0.1 + 0.85 * (1.0 - np.exp(-self.score(bag) / 2.0))

    def evaluate_many(self, bags: np.ndarray) -> np.ndarray:
        """Vectorised scores for an (n, k) integer array of bags."""
        bags = np.asarray(bags, dtype=int)
        s = self.informativeness[bags].sum(axis=1)
        k = bags.shape[1]
        for i in range(k):
            for j in range(i + 1, k):
                s -= self.redundancy[bags[:, i], bags[:, j]]
        return 0.1 + 0.85 * (1.0 - np.exp(-s / 2.0))

    def describe(self) -> dict:
        return {"type": "RedundancyOracle", "N": self.N, "seed": self.seed,
                "hub": self.hub, "partners": list(self.partners)}


class SubprocessOracle(RewardOracle):
    """Out-of-process oracle speaking a line protocol over stdin/stdout.

    Request: the bag as space-separated sorted indices plus newline.
    Response: one line holding a real number.  Calls are serialised.
    """

    concurrent_safe = False

    def __init__(self, command: Sequence[str], deterministic: bool = True):
        self.command = list(command)
        self.deterministic = deterministic
        self._lock = threading.Lock()
        self._proc: Optional[subprocess.Popen] = None

    def _ensure(self):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1,
            )
        return self._proc

    def evaluate(self, bag) -> float:
        bag = tuple(sorted(int(b) for b in bag))
        with self._lock:
            proc = self._ensure()
            try:
                proc.stdin.write(" ".join(map(str, bag)) + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise OracleError(f"oracle process failed on bag {bag}: {exc}", bag) from exc
        if not line:
            raise OracleError(f"oracle process closed its output on bag {bag}", bag)
        try:
            return float(line)
        except ValueError as exc:
            raise OracleError(f"oracle replied {line.strip()!r} for bag {bag}", bag) from exc

    def close(self) -> None:
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)
            self._proc = None

    def describe(self) -> dict:
        return {"type": "SubprocessOracle", "command": self.command}


def featsel_kernel(N: int, scale: float = 1.0, jitter: float = 0.0) -> BagOverlapKernel:
    """Shared selected features, +1 on the diagonal."""
    return BagOverlapKernel(N, offset=0.0, norm=1.0, white=1.0, scale=scale, jitter=jitter)


class FeatureSelectionDomain(BagDomain):
    name = "featsel"

    def __init__(self, n_features: int, k: int, oracle: RewardOracle):
        super().__init__(n_features, k)
        self.oracle = oracle

    def terminal_reward(self, state: Bag) -> float:
        try:
            return float(self.oracle.evaluate(state))
        except OracleError:
            raise
        except Exception as exc:
            raise OracleError(f"oracle failed on bag {tuple(state)}: {exc}", tuple(state)) from exc

    def kernel(self, scale: Optional[float] = None, jitter: float = 0.0) -> BagOverlapKernel:
        # standardised rewards: c = 1 / depth by default
        return featsel_kernel(self.N, scale=1.0 / self.k if scale is None else scale, jitter=jitter)

    def describe(self) -> dict:
        return {"name": self.name, "N": self.N, "k": self.k, "oracle": self.oracle.describe()}


def feature_selection_domain(N: int, k: int, oracle: RewardOracle) -> FeatureSelectionDomain:
    return FeatureSelectionDomain(N, k, oracle)


def reference_task(N: int = 30, k: int = 5, seed: int = 7) -> FeatureSelectionDomain:
    return FeatureSelectionDomain(N, k, RedundancyOracle(N, seed=seed))
