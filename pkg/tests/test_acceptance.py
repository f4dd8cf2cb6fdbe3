"""End-to-end acceptance checks at desk scale.

Each test prints one PASS/FAIL line (repeated in the terminal summary).
The experiment tests are slow; the whole module takes about 40 minutes on
one CPU.
"""

import time

import numpy as np
import pytest

from probdag.dag import SearchDag, Status
from probdag.domains import SyntheticDomain, SyntheticSpec, TicTacToe, ttt_minimax_oracle
from probdag.domains.bags import bag_key
from probdag.domains.tictactoe import play
from probdag.harness import (
    default_config,
    final_summary,
    pooled_se,
    read_results,
    replay_run,
    run_experiment,
)
from probdag.oracles import batch_posterior, exhaustive_best_leaf, negamax
from probdag.posterior import GaussianPosterior
from probdag.validation import check_closed_form, check_duality_dominance, check_pairwise

pytestmark = pytest.mark.slow

PROB = ("prob-dag", "prob-tree", "prob-dag-simplified")


def timed_experiment(cfg, out):
    t0 = time.perf_counter()
    manifest = run_experiment(cfg, out)
    assert manifest["failed"] == 0
    return read_results(out / "results.csv"), time.perf_counter() - t0


def beats(s, a, b):
    """Mean difference of a over b and its pooled standard error."""
    return s[a]["mean"] - s[b]["mean"], pooled_se(s[a]["values"], s[b]["values"])


def se(values):
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


class TestExtremalFidelity:
    def test_pairwise_moments_match_monte_carlo(self, verdict):
        t0 = time.perf_counter()
        res = check_pairwise(configs=200, samples=100_000, seed=0)
        elapsed = time.perf_counter() - t0
        ok = res.passed and elapsed <= 300
        verdict(1, ok, f"{res.detail['failures']} of 200 configurations outside 3 SE + 0.02; "
                       f"worst margin {res.detail['worst_margin']:.4f}; {elapsed:.0f}s")
        assert ok

    def test_closed_form_and_invariants(self, verdict):
        closed = check_closed_form(1e-3)
        inv = check_duality_dominance(200)
        ok = closed.passed and inv.passed
        verdict(2, ok, f"mean {closed.detail['mean']:.6f}, variance {closed.detail['variance']:.6f}; "
                       f"duality error {inv.detail['duality_error']:.1e}, "
                       f"dominance error {inv.detail['dominance_error']:.1e}")
        assert ok


class TestPosteriorEquivalence:
    @staticmethod
    def observations(domain, n, rng):
        leaves = domain.terminal_states()
        picks = rng.integers(len(leaves), size=n)
        return ([bag_key(leaves[i]) for i in picks],
                [domain.terminal_reward(leaves[i]) for i in picks])

    def test_incremental_matches_batch(self, verdict):
        d = SyntheticDomain(SyntheticSpec())
        kern = d.kernel()
        rng = np.random.default_rng(0)
        nodes = []
        for _ in range(100):
            size = int(rng.integers(0, 6))
            nodes.append(bag_key(tuple(rng.choice(15, size=size, replace=False))))
        keys, rewards = self.observations(d, 200, rng)
        post = GaussianPosterior(kern, 1e-4)
        for i, (k, r) in enumerate(zip(keys, rewards)):
            if i % 2 == 0:
                post.track(nodes[i // 2:i // 2 + 1])
            post.add_observation(k, r)
        idx = post.track(nodes)
        mean, var = batch_posterior(kern, keys, rewards, 1e-4, nodes)
        err = max(np.max(np.abs(post.tracked_means[idx] - mean)),
                  np.max(np.abs(post.tracked_variances[idx] - var)))

        def cost(n):
            ks, rs = self.observations(d, n, np.random.default_rng(n))
            best = np.inf
            for _ in range(3):
                p = GaussianPosterior(kern, 1e-4)
                p.track(nodes)
                t0 = time.perf_counter()
                for k, r in zip(ks, rs):
                    p.add_observation(k, r)
                best = min(best, time.perf_counter() - t0)
            return best

        ratio = cost(800) / cost(400)
        ok = err <= 1e-8 and ratio < 5
        verdict(3, ok, f"max deviation {err:.1e} at 100 nodes; doubling cost ratio {ratio:.2f}")
        assert ok


class TestSynthetic:
    def test_method_ordering(self, tmp_path, verdict):
        rows, elapsed = timed_experiment(default_config("synthetic"), tmp_path)
        s = final_summary(rows)
        checks = []
        for a in ("prob-dag", "prob-tree"):
            for b in ("uct", "ucd"):
                diff, pse = beats(s, a, b)
                checks.append(diff > 0 and diff >= pse)
        simp_diff, simp_se = beats(s, "prob-dag-simplified", "prob-dag")
        tree_diff, tree_se = beats(s, "prob-dag", "prob-tree")
        checks += [abs(simp_diff) <= simp_se, abs(tree_diff) <= tree_se, elapsed <= 1200]
        ok = all(checks)
        means = ", ".join(f"{m} {s[m]['mean']:.4f} (beta {s[m]['beta']:g})" for m in sorted(s))
        verdict(4, ok, f"{means}; {elapsed:.0f}s")
        assert ok

    def test_exhaustive_convergence(self, tmp_path, verdict):
        cfg = default_config("synthetic")
        cfg.methods = list(PROB)
        cfg.betas = {m: [0.1] for m in PROB}
        cfg.budget = 3003
        rows, elapsed = timed_experiment(cfg, tmp_path)
        _, top = exhaustive_best_leaf(SyntheticDomain(SyntheticSpec(seed=0)))
        finals = [v for ck, _, _, _, v in rows if ck == cfg.budget]
        misses = sum(v < top for v in finals)
        ok = len(finals) == 3 * cfg.repetitions and misses == 0
        verdict(5, ok, f"{len(finals) - misses} of {len(finals)} runs reached the maximum "
                       f"{top:.4f}; {elapsed:.0f}s")
        assert ok


class TestTicTacToe:
    def test_against_optimal_opponent(self, tmp_path, verdict):
        rows, elapsed = timed_experiment(default_config("tictactoe"), tmp_path)
        s = final_summary(rows)
        dag = s["prob-dag"]["mean"]
        capped = all(s[m]["mean"] <= 2 * se(s[m]["values"]) for m in s)
        ok = (dag >= -0.05 and dag >= s["uct"]["mean"] and dag >= s["ucd"]["mean"]
              and capped and elapsed <= 1800)
        means = ", ".join(f"{m} {s[m]['mean']:+.3f}" for m in sorted(s))
        verdict(6, ok, f"{means}; {elapsed:.0f}s")
        assert ok


class TestFeatureSelection:
    def test_method_ordering(self, tmp_path, verdict):
        cfg = default_config("featsel")
        rows, elapsed = timed_experiment(cfg, tmp_path)
        s = final_summary(rows)
        half = final_summary(rows, checkpoint=cfg.budget // 2)
        failed = []
        for a in ("prob-dag", "prob-dag-simplified", "uct-rave"):
            for b in ("uct", "ucd"):
                diff, pse = beats(s, a, b)
                if not (diff > 0 and diff >= pse):
                    failed.append(f"{a} over {b} by {diff:+.4f} (pooled SE {pse:.4f})")
        if half["prob-dag"]["mean"] < half["uct-rave"]["mean"]:
            failed.append("prob-dag behind uct-rave at half budget")
        if elapsed > 1200:
            failed.append("too slow")
        means = ", ".join(f"{m} {s[m]['mean']:.4f}" for m in sorted(s))
        verdict(7, not failed, f"{means}; {elapsed:.0f}s" + ("; " + "; ".join(failed)
                                                              if failed else ""))
        assert not failed, failed


class TestDeterminism:
    def test_replay_reproduces_traces(self, tmp_path, verdict):
        counts = []
        for experiment, budget in (("synthetic", 60), ("tictactoe", 120), ("featsel", 60)):
            cfg = default_config(experiment)
            cfg.repetitions = 1
            cfg.budget = budget
            cfg.eval_games = 4
            cfg.betas = {m: cfg.betas[m][:1] for m in cfg.methods}
            out = tmp_path / experiment
            run_experiment(cfg, out)
            runs = [p.stem for p in sorted((out / "traces").glob("*.csv"))]
            same = sum((out / "traces" / f"{r}.csv").read_bytes()
                       == replay_run(out / "manifest.json", r)["trace_csv"].encode() for r in runs)
            counts.append((experiment, same, len(runs), len(cfg.methods)))
        ok = all(same == n == m for _, same, n, m in counts)
        verdict(8, ok, "; ".join(f"{e}: {same} of {n} replayed traces byte-identical"
                                 for e, same, n, _ in counts))
        assert ok


class TestStructure:
    def test_expansion_and_minimax(self, verdict):
        d = SyntheticDomain(SyntheticSpec())
        dag = SearchDag(d.root_state(), d.key(d.root_state()), d.node_kind(0))
        stack = [dag.root]
        while stack:
            nid = stack.pop()
            if dag[nid].status == Status.BOUNDARY:
                stack.extend(dag.expand(nid, d))
        leaves = sum(1 for n in dag.nodes if n.status == Status.TERMINAL)
        empty = ttt_minimax_oracle(TicTacToe().root_state())[0]
        rng = np.random.default_rng(2024)
        agree = 0
        for _ in range(500):
            board = TicTacToe().root_state()
            for _ in range(int(rng.integers(0, 9))):
                moves = [i for i, c in enumerate(board) if c == 0]
                if TicTacToe().is_terminal(board):
                    break
                board = play(board, moves[int(rng.integers(len(moves)))])
            agree += ttt_minimax_oracle(board)[0] == negamax(board)
        ok = len(dag) == 4944 and leaves == 3003 and empty == 0 and agree == 500
        verdict(9, ok, f"{len(dag)} nodes, {leaves} leaves; empty board {empty}; "
                       f"{agree} of 500 positions agree with negamax")
        assert ok
