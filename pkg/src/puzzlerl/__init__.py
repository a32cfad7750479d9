"""Multi-attempt reinforcement learning on deterministic 2D physics puzzles.

Subsystems: a deterministic rigid-body simulator with two puzzle
environments (sim), a token codec and episode types (actions), a small
autoregressive policy (policy), group-relative multi-turn policy
optimization (grpo), a learned outcome model (worldmodel), balanced dataset
curation (curation), root-node search (planner), and an evaluation harness
with a command line interface (harness, cli).
"""

__version__ = "0.1.0"
