from .base import Domain
from .bags import BagDomain, BagOverlapKernel, bag_key, key_bag
from .featsel import (
    FeatureSelectionDomain,
    FunctionOracle,
    OracleError,
    RedundancyOracle,
    RewardOracle,
    SubprocessOracle,
    feature_selection_domain,
    featsel_kernel,
    reference_task,
)
from .synthetic import SyntheticDomain, SyntheticSpec, synthetic_ground_truth, synthetic_kernel
from .tictactoe import MarkOverlapKernel, TicTacToe, optimal_min_move, ttt_minimax_oracle

__all__ = [
    "Domain",
    "BagDomain",
    "BagOverlapKernel",
    "bag_key",
    "key_bag",
    "FeatureSelectionDomain",
    "FunctionOracle",
    "OracleError",
    "RedundancyOracle",
    "RewardOracle",
    "SubprocessOracle",
    "feature_selection_domain",
    "featsel_kernel",
    "reference_task",
    "SyntheticDomain",
    "SyntheticSpec",
    "synthetic_ground_truth",
    "synthetic_kernel",
    "MarkOverlapKernel",
    "TicTacToe",
    "optimal_min_move",
    "ttt_minimax_oracle",
]
