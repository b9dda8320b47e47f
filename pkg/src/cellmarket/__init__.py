"""Exchange-economy user association for energy-harvesting small cells."""
from .demand import Bundle, KnapsackInstance, demand, knapsack_01
from .market import Allocation, DimensionError, Economy, EconomyError, StateSpace
from .scenario import ScenarioError, ScenarioFile, load_scenario
from .tatonnement import AuctionConfig, AuctionTrace, run_auction

__all__ = [
    "Allocation",
    "AuctionConfig",
    "AuctionTrace",
    "Bundle",
    "DimensionError",
    "Economy",
    "EconomyError",
    "KnapsackInstance",
    "ScenarioError",
    "ScenarioFile",
    "StateSpace",
    "demand",
    "knapsack_01",
    "load_scenario",
    "run_auction",
]
