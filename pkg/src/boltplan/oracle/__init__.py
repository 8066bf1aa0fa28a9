"""Heuristic oracles: exact symbolic, noise-injecting wrapper, and a remote language model."""

from .base import Effect, Feasibility, Oracle, OracleError
from .noisy import NoisyOracle, noisy_wrap
from .llm import EndpointConfig, LlmOracle, OracleRequest, OracleResponse
from .symbolic import SymbolicOracle, goal_gain, symbolic_check, symbolic_predict, symbolic_propose

__all__ = ["Effect", "Feasibility", "Oracle", "OracleError", "NoisyOracle", "noisy_wrap", "SymbolicOracle",
           "goal_gain", "EndpointConfig", "LlmOracle", "OracleRequest", "OracleResponse", "symbolic_check", "symbolic_predict", "symbolic_propose"]
