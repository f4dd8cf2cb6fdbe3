"""Reference computations used to check the search components.

None of these share numerical code with the modules they validate: the
extremal moments are sampled, the posterior is a dense solve, the game
value is a plain recursion.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "OracleReport",
    "OracleError",
    "mc_extremal_moments",
    "exhaustive_best_leaf",
    "batch_posterior",
    "negamax",
]

MIN_SAMPLES = 100_000
MIN_ESS = 100
CHUNK = 250_000
MAX_TERMINALS = 10_000_000
MAX_BATCH = 5000


class OracleError(RuntimeError):
    pass


@dataclass
class OracleReport:
    name: str
    config: Dict[str, Any]
    estimate: Dict[str, float]
    standard_error: Dict[str, float]
    samples: int
    ess: Optional[float] = None
    reliable: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _as_pairs(beliefs) -> Tuple[np.ndarray, np.ndarray]:
    mu = np.array([b.mean for b in beliefs], dtype=float)
    sd = np.sqrt(np.array([b.variance for b in beliefs], dtype=float))
    return mu, sd


def mc_extremal_moments(beliefs, correlations=None, prior=None, samples: int = 1_000_000,
                        rng: Optional[np.random.Generator] = None, kind: str = "max") -> OracleReport:
    """Moments of ``max`` (or ``min``) of jointly Gaussian variables by sampling.

    ``prior`` is None or a ``(mean, variance)`` pair; it reweights each
    sampled extremum by its density, which samples the exact prior-tilted
    distribution.  Fixed chunking keeps the result seed-deterministic.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    if kind not in ("max", "min"):
        raise ValueError(f"unknown kind {kind!r}")
    rng = rng or np.random.default_rng(0)
    mu, sd = _as_pairs(beliefs)
    d = mu.size
    if correlations is None:
        chol = np.diag(sd)
    else:
        C = np.asarray(correlations, dtype=float)
        cov = C * np.outer(sd, sd)
        # eigen square root tolerates singular (e.g. perfectly correlated) pairs
        w, U = np.linalg.eigh(cov)
        chol = U * np.sqrt(np.clip(w, 0.0, None))
    draws = []
    weights = []
    done = 0
    while done < samples:
        n = min(CHUNK, samples - done)
        x = mu + rng.standard_normal((n, d)) @ chol.T
        m = x.max(axis=1) if kind == "max" else x.min(axis=1)
        if prior is None:
            lw = np.zeros(n)
        else:
            m0, v0 = prior
            lw = -0.5 * (m - m0) ** 2 / v0
        draws.append(m)
        weights.append(lw)
        done += n
    m = np.concatenate(draws)
    lw = np.concatenate(weights)
    # rescaling by the largest log weight cancels in every ratio below
    w = np.exp(lw - lw.max())
    sw = w.sum()
    if not sw > 0:
        raise OracleError("all importance weights vanished")
    mean = float(np.sum(w * m) / sw)
    dev = m - mean
    var = float(np.sum(w * dev * dev) / sw)
    ess = float(sw * sw / np.sum(w * w))
    se_mean = float(math.sqrt(np.sum(w * w * dev * dev)) / sw)
    se_var = float(math.sqrt(np.sum(w * w * (dev * dev - var) ** 2)) / sw)
    std = math.sqrt(var)
    se_std = se_var / (2.0 * std) if std > 0 else 0.0
    return OracleReport(
        name="mc_extremal_moments",
        config={"means": mu.tolist(), "stds": sd.tolist(),
                "correlations": None if correlations is None else np.asarray(correlations).tolist(),
                "prior": None if prior is None else list(prior), "kind": kind},
        estimate={"mean": mean, "variance": var, "std": std},
        standard_error={"mean": se_mean, "variance": se_var, "std": se_std},
        samples=int(samples),
        ess=ess,
        reliable=ess >= MIN_ESS,
    )


def _terminal_count(domain) -> Optional[int]:
    if hasattr(domain, "N") and hasattr(domain, "k"):
        return math.comb(domain.N, domain.k)
    return None


def exhaustive_best_leaf(domain, limit: int = MAX_TERMINALS):
    """Best terminal state and reward by enumeration; ties keep the first."""
    count = _terminal_count(domain)
    if count is not None and count > limit:
        raise OracleError(f"{count} terminal states exceed the enumeration limit {limit}")
    if count is None:
        terminals = _enumerate_terminals(domain, limit)
    else:
        terminals = domain.terminal_states()
    oracle = getattr(domain, "oracle", None)
    if oracle is not None and hasattr(oracle, "evaluate_many") and terminals and \
            isinstance(terminals[0], tuple):
        rewards = oracle.evaluate_many(np.array(terminals, dtype=int))
    else:
        rewards = np.array([domain.terminal_reward(t) for t in terminals], dtype=float)
    i = int(np.argmax(rewards))
    return terminals[i], float(rewards[i])


def _enumerate_terminals(domain, limit):
    seen = set()
    out = []
    stack = [domain.root_state()]
    while stack:
        s = stack.pop()
        k = domain.key(s)
        if k in seen:
            continue
        seen.add(k)
        if domain.is_terminal(s):
            out.append(s)
            if len(out) > limit:
                raise OracleError(f"more than {limit} terminal states")
        else:
            stack.extend(reversed(domain.successors(s)))
    return out


def batch_posterior(kernel, keys: Sequence[bytes], rewards: Sequence[float], noise: float,
                    queries: Sequence[bytes], max_jitter: float = 1e-2):
    """Posterior means and variances at ``queries`` from one dense solve."""
    n = len(keys)
    if n > MAX_BATCH:
        raise OracleError(f"{n} observations exceed the batch limit {MAX_BATCH}")
    c = kernel.scale
    mu_q = np.array([kernel.prior_mean(q) for q in queries], dtype=float)
    prior_q = np.array([c * kernel.cov(q, q) for q in queries], dtype=float)
    if n == 0:
        return mu_q, prior_q
    S = np.array([[kernel.cov(a, b) for b in keys] for a in keys], dtype=float)
    jitter = kernel.jitter
    while True:
        K = c * S + (noise + c * jitter) * np.eye(n)
        try:
            np.linalg.cholesky(K)
            break
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-8)
            if jitter > max_jitter:
                raise OracleError("observation Gram not positive definite after jitter escalation")
    Kq = c * np.array([[kernel.cov(q, b) for b in keys] for q in queries], dtype=float)
    resid = np.asarray(rewards, dtype=float) - np.array([kernel.prior_mean(k) for k in keys])
    sol = np.linalg.solve(K, np.column_stack([resid, Kq.T]))
    mean = mu_q + Kq @ sol[:, 0]
    var = prior_q - np.einsum("ij,ji->i", Kq, sol[:, 1:])
    return mean, np.maximum(var, 0.0)


_LINES = ((0, 1, 2), (3, 4, 5), (6, 7, 8), (0, 3, 6), (1, 4, 7), (2, 5, 8), (0, 4, 8), (2, 4, 6))


def negamax(board) -> int:
    """Game value for the side to move, by full recursion without a cache."""
    board = list(board)
    for a, b, c in _LINES:
        if board[a] and board[a] == board[b] == board[c]:
            return -1  # the previous mover completed a line
    empty = [i for i in range(9) if board[i] == 0]
    if not empty:
        return 0
    mark = 1 if board.count(1) == board.count(2) else 2
    best = -2
    for i in empty:
        board[i] = mark
        best = max(best, -negamax(board))
        board[i] = 0
        if best == 1:
            break
    return best
