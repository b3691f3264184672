"""Seed-deterministic turn-based strategy environment engine.

The package is organised around a content-agnostic rules engine driven by
data files (rulesets), with two agent-facing observation encodings, a
mini-game benchmark generator, a wire-protocol server, and combinatorial
state-space estimators.
"""

__version__ = "0.1.0"
