"""Meta-gradient fairness poisoning attacks on graph neural networks."""
from .attack import AttackPlan, budget_schedule, meta_gradient, run_fate
from .bias import BiasSpec, evaluate_bias, individual_bias, q_approx, statistical_parity_bias
from .graph import Graph, SbmConfig, Split, SplitSpec, generate_sbm, generate_split
from .result import AttackResult, LedgerEntry
from .surrogate import SurrogateParams, init_surrogate, train_surrogate
from .victim import VictimConfig, evaluate, train_victim

__all__ = [
    "AttackPlan", "AttackResult", "BiasSpec", "Graph", "LedgerEntry", "SbmConfig", "Split",
    "SplitSpec", "SurrogateParams", "VictimConfig", "budget_schedule", "evaluate",
    "evaluate_bias", "generate_sbm", "generate_split", "individual_bias", "init_surrogate",
    "meta_gradient", "q_approx", "run_fate", "statistical_parity_bias", "train_surrogate",
    "train_victim",
]
