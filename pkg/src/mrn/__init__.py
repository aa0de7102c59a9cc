"""Quasipseudometric critics for goal-conditioned RL, with exact
small-scale verification of the structure they rely on."""

__version__ = "0.1.0"

__all__ = [
    "autodiff",
    "nets",
    "quasimetric",
    "mdp",
    "toyworld",
    "gcrl",
    "kernels",
    "config",
    "cli",
]
