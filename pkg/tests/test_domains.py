import sys
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probdag.dag import Kind
from probdag.domains import (
    FeatureSelectionDomain,
    FunctionOracle,
    OracleError,
    RedundancyOracle,
    SubprocessOracle,
    SyntheticDomain,
    SyntheticSpec,
    TicTacToe,
    bag_key,
    key_bag,
    optimal_min_move,
    reference_task,
    synthetic_ground_truth,
    ttt_minimax_oracle,
)
from probdag.domains.synthetic import ground_truth_samples
from probdag.domains.tictactoe import is_legal, play
from probdag.oracles import exhaustive_best_leaf, negamax

REFERENCE_OPTIMUM = ((10, 14, 16, 23, 25), 0.828930921592699)


def random_board(rng, plies):
    board = TicTacToe().root_state()
    for _ in range(plies):
        moves = [i for i in range(9) if board[i] == 0]
        if not moves or TicTacToe().is_terminal(board):
            break
        board = play(board, moves[int(rng.integers(len(moves)))])
    return board


class TestBags:
    def test_key_round_trip(self):
        assert key_bag(bag_key((3, 1, 2))) == (1, 2, 3)

    def test_random_successor_is_a_successor(self):
        d = SyntheticDomain(SyntheticSpec())
        rng = np.random.default_rng(0)
        for _ in range(50):
            s = (2, 7)
            assert d.random_successor(s, rng) in d.successors(s)

    def test_random_successor_uniform(self):
        d = SyntheticDomain(SyntheticSpec())
        rng = np.random.default_rng(1)
        seen = [d.random_successor((0, 14), rng) for _ in range(13_000)]
        added = [(set(s) - {0, 14}).pop() for s in seen]
        counts = np.unique(added, return_counts=True)[1]
        assert len(counts) == 13 and counts.min() > 850

    def test_size_bounds(self):
        with pytest.raises(ValueError):
            FeatureSelectionDomain(3, 4, FunctionOracle(lambda b: 0.0))


class TestSynthetic:
    def test_same_seed_same_map(self):
        assert synthetic_ground_truth(SyntheticSpec(seed=3)) == synthetic_ground_truth(
            SyntheticSpec(seed=3))

    def test_counts(self):
        d = SyntheticDomain(SyntheticSpec())
        assert len(d.terminal_states()) == 3003
        states = sum(len(list(combinations(range(15), j))) for j in range(6))
        assert states == 4944

    def test_kernel_values(self):
        k = SyntheticDomain(SyntheticSpec()).kernel()
        assert k.cov(bag_key(()), bag_key(())) == pytest.approx(1 / 6)
        assert k.cov(bag_key((1, 2)), bag_key((2, 3))) == pytest.approx(2 / 6)
        assert k.cov(bag_key((0, 1, 2, 3, 4)), bag_key((0, 1, 2, 3, 4))) == pytest.approx(1.0)

    def test_leaf_rewards_follow_the_kernel(self):
        # empirical covariance over many landscapes approaches Sigma
        R = ground_truth_samples(15, 5, range(400))
        leaves = SyntheticDomain(SyntheticSpec()).terminal_states()
        i = leaves.index((0, 1, 2, 3, 4))
        j = leaves.index((0, 1, 2, 5, 6))
        cov = np.cov(R[:, i], R[:, j])
        assert abs(cov[0, 0] - 1.0) < 0.2 and abs(cov[0, 1] - 4 / 6) < 0.2


class TestTicTacToe:
    def test_empty_board_draw(self):
        assert ttt_minimax_oracle(TicTacToe().root_state())[0] == 0

    def test_immediate_win(self):
        board = (1, 1, 0, 2, 2, 0, 0, 0, 0)
        value, moves = ttt_minimax_oracle(board)
        assert value == 1 and 2 in moves

    def test_fork_loses(self):
        # O to move can neither block both X threats nor win
        board = (1, 0, 1, 0, 2, 0, 1, 0, 2)
        assert ttt_minimax_oracle(board)[0] == -1

    def test_agrees_with_negamax(self):
        rng = np.random.default_rng(9)
        for _ in range(60):
            board = random_board(rng, int(rng.integers(0, 8)))
            assert ttt_minimax_oracle(board)[0] == negamax(board)

    def test_illegal_board(self):
        with pytest.raises(ValueError):
            ttt_minimax_oracle((1, 1, 1, 1, 0, 0, 0, 0, 0))

    def test_min_reply_is_optimal(self):
        board = play(TicTacToe().root_state(), 0)
        move = optimal_min_move(board)
        assert move in ttt_minimax_oracle(board)[1] and move == 4

    def test_kinds_alternate(self):
        d = TicTacToe()
        assert [d.node_kind(i) for i in range(3)] == [Kind.MAX, Kind.MIN, Kind.MAX]

    def test_kernel_features_match_cov(self):
        d = TicTacToe()
        k = d.kernel()
        rng = np.random.default_rng(2)
        boards = [d.key(random_board(rng, p)) for p in range(9)]
        phi = k.features(boards)
        ref = np.array([[k.cov(a, b) for b in boards] for a in boards])
        assert np.allclose(phi @ phi.T, ref)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(0, 9))
    def test_random_positions_legal(self, seed, plies):
        assert is_legal(random_board(np.random.default_rng(seed), plies))


class TestFeatureSelection:
    def test_toy_optimum(self):
        d = FeatureSelectionDomain(5, 2, FunctionOracle(lambda b: abs(sum(b))))
        assert exhaustive_best_leaf(d) == ((3, 4), 7)

    def test_reference_optimum(self):
        assert exhaustive_best_leaf(reference_task()) == REFERENCE_OPTIMUM

    def test_reference_defeats_greedy(self):
        d = reference_task()
        bag = ()
        while not d.is_terminal(bag):
            # greedy on the score of the partial bag
            bag = max(d.successors(bag), key=d.oracle.score)
        assert d.terminal_reward(bag) < REFERENCE_OPTIMUM[1]

    def test_vectorised_scores(self):
        o = RedundancyOracle(30, seed=7)
        bags = np.array(list(combinations(range(30), 5))[:500])
        assert np.allclose(o.evaluate_many(bags), [o.evaluate(b) for b in bags])

    def test_oracle_failure_wrapped(self):
        d = FeatureSelectionDomain(4, 2, FunctionOracle(lambda b: 1 / 0))
        with pytest.raises(OracleError):
            d.terminal_reward((0, 1))

    def test_subprocess_oracle(self):
        script = ("import sys\n"
                  "for line in sys.stdin:\n"
                  "    print(sum(int(t) for t in line.split()) / 10, flush=True)\n")
        oracle = SubprocessOracle([sys.executable, "-c", script])
        try:
            d = FeatureSelectionDomain(6, 2, oracle)
            assert d.terminal_reward((5, 2)) == pytest.approx(0.7)
            assert d.terminal_reward((0, 1)) == pytest.approx(0.1)
        finally:
            oracle.close()

    def test_subprocess_bad_reply(self):
        oracle = SubprocessOracle([sys.executable, "-c",
                                   "import sys\nfor l in sys.stdin: print('nan?', flush=True)"])
        try:
            with pytest.raises(OracleError):
                oracle.evaluate((1, 2))
        finally:
            oracle.close()
