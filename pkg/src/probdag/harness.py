"""Experiment runner: methods x beta values x repetitions, with CSV/JSON output.

Every run is described by a JSON-serialisable *run spec* holding the
domain parameters, the method configuration and the seed.  The manifest
stores these specs, so any single run can be re-executed from the
manifest alone.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import math
import platform
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .baselines import BaselineConfig, CountSearch, RaveConfig
from .domains import FeatureSelectionDomain, RedundancyOracle, SyntheticDomain, SyntheticSpec, TicTacToe
from .domains.tictactoe import EMPTY_BOARD, O, X, is_over, optimal_min_move, outcome, ttt_minimax_oracle
from .engine import ProbabilisticSearch, SearchConfig, recommend_state
from .extremal import NO_PRIOR, ExtremalPrior

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "PROB_METHODS",
    "COUNT_METHODS",
    "ALL_METHODS",
    "default_config",
    "build_domain",
    "build_search",
    "execute_run",
    "run_experiment",
    "evaluate_adversarial",
    "report_pixels",
    "aggregate_rows",
    "final_summary",
    "pooled_se",
    "replay_run",
    "trace_csv",
]

PROB_METHODS = ("prob-dag", "prob-tree", "prob-dag-simplified")
COUNT_METHODS = ("uct", "ucd", "uct-rave")
ALL_METHODS = PROB_METHODS + COUNT_METHODS
SYNTHETIC_BETAS = (0.01, 0.1, 1.0, math.sqrt(2.0), 10.0)
RESULT_FIELDS = ("checkpoint", "method", "beta", "repetition", "value")
AGGREGATE_FIELDS = ("checkpoint", "method", "beta", "mean", "std", "n")
TRACE_FIELDS = ("iteration", "boundary_key", "terminal_key", "reward", "standardized",
                "best_so_far", "evaluation")


@dataclass
class ExperimentConfig:
    experiment: str
    methods: List[str]
    betas: Dict[str, List[float]]
    method_params: Dict[str, Dict[str, Any]]
    domain: Dict[str, Any]
    repetitions: int
    base_seed: int = 0
    budget: int = 500
    record_every: int = 10
    eval_every: int = 50
    eval_games: int = 20
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in ("synthetic", "tictactoe", "featsel"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        if "uct-rave" in self.methods and self.experiment != "featsel":
            raise ValueError("uct-rave needs feature bags (featsel only)")
        if self.repetitions < 0 or self.budget < 0:
            raise ValueError("repetitions and budget must be nonnegative")
        if self.record_every < 1 or self.eval_every < 1:
            raise ValueError("cadences must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)


def default_config(experiment: str) -> ExperimentConfig:
    """Defaults mirroring the published setups at desk scale."""
    if experiment == "synthetic":
        betas = {m: list(SYNTHETIC_BETAS) for m in ("prob-dag", "prob-tree", "prob-dag-simplified",
                                                    "uct", "ucd")}
        params = {m: {"lam": 1e-4} for m in PROB_METHODS}
        return ExperimentConfig(
            experiment, ["prob-dag", "prob-tree", "prob-dag-simplified", "uct", "ucd"], betas,
            params, {"N": 15, "m": 5, "ground_truth_seed": 0}, repetitions=30, budget=500,
        )
    if experiment == "tictactoe":
        methods = ["prob-dag", "prob-tree", "prob-dag-simplified", "uct", "ucd"]
        betas = {m: [1.0] for m in methods}
        # rewards are raw game outcomes, so no standard-normal prior; the Brownian
        # step of the increment model takes c itself
        ttt = {"c": 0.5, "step_variance": 0.5, "prior": "none"}
        params = {
            "prob-dag": {"lam": 0.1, **ttt},
            "prob-tree": {"lam": 0.1, **ttt},
            "prob-dag-simplified": {"lam": 0.001, **ttt},
        }
        return ExperimentConfig(experiment, methods, betas, params, {}, repetitions=10,
                                budget=3000, record_every=50, eval_every=50, eval_games=20)
    if experiment == "featsel":
        methods = ["prob-dag", "prob-dag-simplified", "uct", "ucd", "uct-rave"]
        betas = {m: [0.5] for m in methods}
        params = {m: {"lam": 1e-4, "pilot_rollouts": 20} for m in PROB_METHODS}
        for m in COUNT_METHODS:
            params[m] = {"pilot_rollouts": 20}
        params["uct-rave"].update(c1=1e-4, c2=1e4, c3=1e4)
        return ExperimentConfig(experiment, methods, betas, params,
                                {"N": 30, "k": 5, "oracle_seed": 7}, repetitions=10, budget=1200)
    raise ValueError(f"unknown experiment {experiment!r}")


# ---------------------------------------------------------------- run specs
def build_domain(experiment: str, params: Dict[str, Any]):
    if experiment == "synthetic":
        return SyntheticDomain(SyntheticSpec(int(params.get("N", 15)), int(params.get("m", 5)),
                                             int(params.get("ground_truth_seed", 0))))
    if experiment == "tictactoe":
        return TicTacToe()
    if experiment == "featsel":
        N = int(params.get("N", 30))
        return FeatureSelectionDomain(N, int(params.get("k", 5)),
                                      RedundancyOracle(N, seed=int(params.get("oracle_seed", 7))))
    raise ValueError(f"unknown experiment {experiment!r}")


def _prior_from(value) -> Optional[ExtremalPrior]:
    if value is None or value == "none":
        return NO_PRIOR
    mean, var = value
    return ExtremalPrior.gaussian(float(mean), float(var))


def build_search(method: str, beta: float, seed: int, budget: int, params: Dict[str, Any], domain):
    params = dict(params)
    if method in PROB_METHODS:
        kw = dict(
            beta=beta, budget=budget, seed=seed,
            rule="softmax" if method == "prob-dag-simplified" else "ep",
            representation="tree" if method == "prob-tree" else "dag",
            lam=float(params.pop("lam", 1e-4)),
            pilot_rollouts=int(params.pop("pilot_rollouts", 0)),
        )
        if "prior" in params:
            kw["prior"] = _prior_from(params.pop("prior"))
        for name in ("c", "step_variance", "jitter"):
            if name in params:
                kw[name] = float(params.pop(name))
        if "summary_enabled" in params:
            kw["summary_enabled"] = bool(params.pop("summary_enabled"))
        if params:
            raise ValueError(f"unknown parameters for {method}: {sorted(params)}")
        return ProbabilisticSearch(domain, SearchConfig(**kw))
    rave = RaveConfig(float(params.pop("c1", 1e-4)), float(params.pop("c2", 1e4)),
                      float(params.pop("c3", 1e4)))
    pilot = int(params.pop("pilot_rollouts", 0))
    if params:
        raise ValueError(f"unknown parameters for {method}: {sorted(params)}")
    return CountSearch(domain, BaselineConfig(method, beta, budget, seed, pilot, rave))


def run_specs(config: ExperimentConfig) -> List[dict]:
    specs = []
    for method in config.methods:
        for beta in config.betas.get(method, [1.0]):
            for r in range(config.repetitions):
                specs.append({
                    "run_id": f"{method}_b{beta:g}_r{r}",
                    "experiment": config.experiment,
                    "domain": dict(config.domain),
                    "method": method,
                    "beta": float(beta),
                    "repetition": r,
                    "seed": config.base_seed + r,
                    "budget": config.budget,
                    "params": dict(config.method_params.get(method, {})),
                    "record_every": config.record_every,
                    "eval_every": config.eval_every,
                    "eval_games": config.eval_games,
                })
    return specs


# ---------------------------------------------------------------- evaluation
class SearchPolicy:
    """Plays X from a frozen search: MAP child when explored, random otherwise."""

    def __init__(self, search):
        self.search = search
        self.node: Optional[int] = None

    def start(self) -> None:
        self.node = self.search.dag.root

    def _locate(self, board) -> None:
        dag = self.search.dag
        key = bytes(board)
        if self.node is not None:
            for c in dag[self.node].children:
                if dag[c].key == key:
                    self.node = c
                    return
        self.node = dag.lookup(key) if dag.transpositions else None

    def move(self, board, rng):
        nxt = recommend_state(self.search, self.node, board, rng)
        self._locate(nxt)
        return nxt

    def observe(self, board) -> None:
        self._locate(board)


class OraclePolicy:
    """Optimal X: the lowest-index cell among the optimal moves."""

    def start(self) -> None:
        pass

    def move(self, board, rng):
        _, moves = ttt_minimax_oracle(board)
        b = list(board)
        b[min(moves)] = X
        return tuple(b)

    def observe(self, board) -> None:
        pass


class RandomPolicy:
    def start(self) -> None:
        pass

    def move(self, board, rng):
        cells = [i for i, c in enumerate(board) if c == 0]
        b = list(board)
        b[cells[int(rng.integers(len(cells)))]] = X
        return tuple(b)

    def observe(self, board) -> None:
        pass


def evaluate_adversarial(policy, games: int, rng: np.random.Generator) -> float:
    """Mean outcome of ``games`` games of ``policy`` (X) against optimal O."""
    if games <= 0:
        raise ValueError("need at least one game")
    total = 0
    for _ in range(games):
        board = EMPTY_BOARD
        policy.start()
        while not is_over(board):
            board = policy.move(board, rng)
            if is_over(board):
                break
            b = list(board)
            b[optimal_min_move(board)] = O
            board = tuple(b)
            policy.observe(board)
        total += outcome(board)
    return total / games


def report_pixels(search, k: Optional[int] = None) -> dict:
    """Best terminal bag observed (pilot included) and its score."""
    if search.best_state is None:
        return {"features": None, "score": None}
    bag = sorted(int(f) for f in search.best_state)
    if k is not None and len(bag) != k:
        raise ValueError("best state is not a full bag")
    return {"features": bag, "score": float(search.best_reward)}


# ---------------------------------------------------------------- execution
def trace_csv(records: Sequence[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    w.writerows(records)
    return buf.getvalue()


def execute_run(spec: dict) -> dict:
    """Run one (method, beta, repetition) and return its curve and trace."""
    t0 = time.perf_counter()
    domain = build_domain(spec["experiment"], spec["domain"])
    search = build_search(spec["method"], spec["beta"], spec["seed"], spec["budget"],
                          spec["params"], domain)
    adversarial = spec["experiment"] == "tictactoe"
    every = spec["eval_every"] if adversarial else spec["record_every"]
    budget = spec["budget"]
    curve: List[tuple] = []
    evaluations: Dict[int, float] = {}
    eval_rng = search.streams["evaluation"]

    def checkpoint(s):
        it = s.iteration
        if it % every and it != budget:
            return
        if adversarial:
            value = evaluate_adversarial(SearchPolicy(s), spec["eval_games"], eval_rng)
            evaluations[it] = value
        else:
            value = s.best_reward
        curve.append((it, float(value)))

    trace = search.run(checkpoint)
    rows = []
    for r in trace.records:
        ev = evaluations.get(r.iteration + 1)
        rows.append((r.iteration, r.boundary_key.hex(), r.terminal_key.hex(), repr(r.reward),
                     repr(r.standardized), repr(r.best_so_far), "" if ev is None else repr(ev)))
    out = {
        "spec": spec,
        "curve": curve,
        "trace_csv": trace_csv(rows),
        "pilot_rewards": trace.pilot_rewards,
        "timings": dict(trace.timings, total=time.perf_counter() - t0),
        "best_reward": None if not math.isfinite(search.best_reward) else search.best_reward,
        "nodes": len(search.dag),
    }
    if isinstance(search, ProbabilisticSearch):
        out["delta_table"] = search.delta.to_dict()
        out["standardization"] = [search.shift, search.scale]
    if spec["experiment"] == "featsel":
        out["selected"] = report_pixels(search, domain.k)
    return out


def _safe_execute(spec: dict) -> dict:
    try:
        return execute_run(spec)
    except Exception as exc:  # recorded per run; the experiment carries on
        return {"spec": spec, "error": f"{type(exc).__name__}: {exc}",
                "traceback": traceback.format_exc()}


def aggregate_rows(rows: Sequence[tuple]) -> List[tuple]:
    """Mean and sample std per (checkpoint, method, beta)."""
    groups: Dict[tuple, List[float]] = {}
    for ck, method, beta, _, value in rows:
        groups.setdefault((int(ck), method, float(beta)), []).append(float(value))
    out = []
    for (ck, method, beta), vals in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][2], kv[0][0])):
        v = np.asarray(vals)
        std = float(v.std(ddof=1)) if v.size > 1 else 0.0
        out.append((ck, method, beta, float(v.mean()), std, int(v.size)))
    return out


def pooled_se(a: Sequence[float], b: Sequence[float]) -> float:
    """Standard error of a difference of independent means."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    va = a.var(ddof=1) / a.size if a.size > 1 else 0.0
    vb = b.var(ddof=1) / b.size if b.size > 1 else 0.0
    return float(math.sqrt(va + vb))


def final_summary(rows: Sequence[tuple], checkpoint: Optional[int] = None) -> Dict[str, dict]:
    """Per method: the beta with the highest mean at ``checkpoint`` and its values."""
    by: Dict[tuple, Dict[int, float]] = {}
    for ck, method, beta, rep, value in rows:
        by.setdefault((method, float(beta), int(ck)), {})[int(rep)] = float(value)
    out: Dict[str, dict] = {}
    for (method, beta, ck), vals in by.items():
        if checkpoint is None:
            last = max(c for (m, b, c) in by if m == method and b == beta)
            if ck != last:
                continue
        elif ck != checkpoint:
            continue
        v = np.array([vals[r] for r in sorted(vals)])
        cur = out.get(method)
        if cur is None or v.mean() > cur["mean"]:
            out[method] = {"beta": beta, "checkpoint": ck, "values": v, "mean": float(v.mean())}
    return out


def _versions() -> dict:
    import scipy

    from . import __version__

    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "probdag": __version__}


def run_experiment(config: ExperimentConfig, out_dir, progress: Optional[Callable] = None) -> dict:
    """Execute every run and write the manifest, raw and aggregate CSVs.

    Returns the manifest; ``manifest["failed"]`` counts failed runs.
    """
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    specs = run_specs(config)
    t0 = time.perf_counter()
    if config.workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_safe_execute, specs))
    else:
        results = []
        for spec in specs:
            results.append(_safe_execute(spec))
            if progress is not None:
                progress(results[-1])
    rows = []
    runs = []
    for res in results:
        spec = res["spec"]
        entry = {"run_id": spec["run_id"], "spec": spec}
        if "error" in res:
            entry.update(status="failed", error=res["error"])
            log.error("run %s failed: %s", spec["run_id"], res["error"])
            runs.append(entry)
            continue
        trace_name = f"traces/{spec['run_id']}.csv"
        text = res["trace_csv"]
        (out / trace_name).write_text(text)
        entry.update(
            status="ok", trace=trace_name,
            trace_sha256=hashlib.sha256(text.encode()).hexdigest(),
            timings=res["timings"], best_reward=res["best_reward"], nodes=res["nodes"],
            pilot_rewards=res["pilot_rewards"],
        )
        for key in ("delta_table", "standardization", "selected"):
            if key in res:
                entry[key] = res[key]
        runs.append(entry)
        for ck, value in res["curve"]:
            rows.append((ck, spec["method"], spec["beta"], spec["repetition"], value))
    rows.sort(key=lambda r: (r[1], r[2], r[3], r[0]))
    with open(out / "results.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for ck, m, b, r, v in rows:
            w.writerow((ck, m, repr(float(b)), r, repr(float(v))))
    with open(out / "aggregate.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(AGGREGATE_FIELDS)
        for ck, m, b, mean, std, n in aggregate_rows(rows):
            w.writerow((ck, m, repr(b), repr(mean), repr(std), n))
    failed = sum(1 for r in runs if r["status"] != "ok")
    manifest = {
        "config": config.to_dict(),
        "versions": _versions(),
        "runs": runs,
        "failed": failed,
        "wall_clock": time.perf_counter() - t0,
        "protocol": {
            "seeds": "repetition r uses seed base_seed + r; streams pilot/search/evaluation "
                     "are spawned from it with numpy SeedSequence",
            "evaluation": "fresh games from the empty board, search frozen, optimal O picks "
                          "the lowest optimal cell" if config.experiment == "tictactoe" else None,
        },
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def read_results(path) -> List[tuple]:
    with open(path, newline="") as f:
        r = csv.DictReader(f)
        return [(int(d["checkpoint"]), d["method"], float(d["beta"]), int(d["repetition"]),
                 float(d["value"])) for d in r]


def replay_run(manifest_path, run_id: str) -> dict:
    """Re-execute one run from its manifest entry; returns the fresh result."""
    with open(manifest_path) as f:
        manifest = json.load(f)
    for entry in manifest["runs"]:
        if entry["run_id"] == run_id:
            return execute_run(copy.deepcopy(entry["spec"]))
    raise KeyError(f"no run {run_id!r} in {manifest_path}")
