"""Tic-Tac-Toe as an adversarial DAG: X (MAX) moves at even levels, O (MIN) at odd."""

from __future__ import annotations

from functools import lru_cache
from typing import List, Tuple

import numpy as np

from ..dag import Kind
from ..posterior import FeatureKernel
from .base import Domain

EMPTY, X, O = 0, 1, 2
Board = Tuple[int, ...]
LINES = (
    (0, 1, 2), (3, 4, 5), (6, 7, 8),
    (0, 3, 6), (1, 4, 7), (2, 5, 8),
    (0, 4, 8), (2, 4, 6),
)
EMPTY_BOARD: Board = (EMPTY,) * 9


def winner(board: Board) -> int:
    for a, b, c in LINES:
        if board[a] != EMPTY and board[a] == board[b] == board[c]:
            return board[a]
    return EMPTY


def to_move(board: Board) -> int:
    xs = board.count(X)
    os = board.count(O)
    return X if xs == os else O


def is_legal(board: Board) -> bool:
    if len(board) != 9 or any(c not in (EMPTY, X, O) for c in board):
        return False
    xs, os = board.count(X), board.count(O)
    if xs - os not in (0, 1):
        return False
    x_wins = any(board[a] == board[b] == board[c] == X for a, b, c in LINES)
    o_wins = any(board[a] == board[b] == board[c] == O for a, b, c in LINES)
    if x_wins and o_wins:
        return False
    if x_wins and xs != os + 1:
        return False
    if o_wins and xs != os:
        return False
    return True


def is_over(board: Board) -> bool:
    return winner(board) != EMPTY or EMPTY not in board


def outcome(board: Board) -> int:
    """+1 X won, -1 O won, 0 otherwise (MAX perspective)."""
    w = winner(board)
    return 1 if w == X else (-1 if w == O else 0)


def play(board: Board, cell: int) -> Board:
    if board[cell] != EMPTY:
        raise ValueError(f"cell {cell} is occupied")
    b = list(board)
    b[cell] = to_move(board)
    return tuple(b)


def legal_moves(board: Board) -> List[int]:
    if is_over(board):
        return []
    return [i for i, c in enumerate(board) if c == EMPTY]


@lru_cache(maxsize=None)
def _solve(board: Board) -> Tuple[int, Tuple[int, ...]]:
    moves = legal_moves(board)
    if not moves:
        # terminal: the side to move just lost if there is a winner
        return (-1 if winner(board) != EMPTY else 0), ()
    best = -2
    best_moves: List[int] = []
    for cell in moves:
        val = -_solve(play(board, cell))[0]
        if val > best:
            best, best_moves = val, [cell]
        elif val == best:
            best_moves.append(cell)
    return best, tuple(best_moves)


def ttt_minimax_oracle(board: Board) -> Tuple[int, Tuple[int, ...]]:
    """Exact value for the side to move and every value-achieving move."""
    board = tuple(board)
    if not is_legal(board):
        raise ValueError(f"illegal board {board}")
    return _solve(board)


def optimal_min_move(board: Board) -> int:
    """Deterministic optimal reply: the lowest cell among optimal moves."""
    _, moves = ttt_minimax_oracle(board)
    if not moves:
        raise ValueError("no move available")
    return min(moves)


class MarkOverlapKernel(FeatureKernel):
    """Shared (cell, mark) pairs divided by ``norm`` (board cells + 1)."""

    level_variance = 0.1

    def __init__(self, scale: float = 0.5, jitter: float = 1e-6, norm: float = 10.0):
        super().__init__(scale=scale, jitter=jitter)
        self.norm = float(norm)
        self.level_variance = 1.0 / self.norm

    @property
    def n_features(self) -> int:
        return 18

    def feature_vector(self, key: bytes) -> np.ndarray:
        cells = np.frombuffer(key, dtype=np.uint8)
        phi = np.zeros(18)
        phi[:9] = cells == X
        phi[9:] = cells == O
        return phi / np.sqrt(self.norm)

    def features(self, keys) -> np.ndarray:
        if len(keys) == 0:
            return np.zeros((0, 18))
        cells = np.frombuffer(b"".join(keys), dtype=np.uint8).reshape(len(keys), 9)
        phi = np.concatenate([cells == X, cells == O], axis=1).astype(float)
        return phi / np.sqrt(self.norm)

    def cov(self, a: bytes, b: bytes) -> float:
        return sum(1 for p, q in zip(a, b) if p == q != EMPTY) / self.norm

    def describe(self) -> dict:
        d = super().describe()
        d["norm"] = self.norm
        return d


class TicTacToe(Domain):
    name = "tictactoe"
    adversarial = True

    def root_state(self) -> Board:
        return EMPTY_BOARD

    def successors(self, state: Board) -> List[Board]:
        return [play(state, c) for c in legal_moves(state)]

    def is_terminal(self, state: Board) -> bool:
        return is_over(state)

    def terminal_reward(self, state: Board) -> float:
        return float(outcome(state))

    def key(self, state: Board) -> bytes:
        return bytes(state)

    def level(self, state: Board) -> int:
        return 9 - state.count(EMPTY)

    def max_depth(self) -> int:
        return 9

    def branching(self, level: int) -> int:
        return 9 - level

    def node_kind(self, level: int) -> Kind:
        return Kind.MAX if level % 2 == 0 else Kind.MIN

    def kernel(self, scale: float = 0.5, jitter: float = 1e-6) -> MarkOverlapKernel:
        return MarkOverlapKernel(scale=scale, jitter=jitter)

    def random_successor(self, state: Board, rng):
        moves = legal_moves(state)
        return play(state, moves[int(rng.integers(len(moves)))])

    def move_between(self, parent: Board, child: Board) -> int:
        diff = [i for i in range(9) if parent[i] != child[i]]
        if len(diff) != 1:
            raise ValueError("boards are not one move apart")
        return diff[0]
