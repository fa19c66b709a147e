"""Entropic optimal-transport guided adversarial attacks on toy dual
encoders, with an exact-OT oracle and a transferability harness."""

from .attack import AttackConfig, AttackResult, generate_adversarial
from .ot import SinkhornConfig, SinkhornDivergenceError, sinkhorn

__all__ = [
    "AttackConfig",
    "AttackResult",
    "generate_adversarial",
    "SinkhornConfig",
    "SinkhornDivergenceError",
    "sinkhorn",
]

__version__ = "0.1.0"
