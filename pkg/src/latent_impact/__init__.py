"""Latent liquidity price-impact laboratory.

PDE simulation of the latent order book, Green-function and perturbative
solvers, closed-form impact and multiplier calculators, and an MRR
Monte-Carlo check.
"""

from .core import (
    DerivedQuantities,
    MemoryDistribution,
    MetaorderSpec,
    ModelParams,
    StockRecord,
    derive,
    params_from_market,
)

__version__ = "0.1.0"

__all__ = [
    "DerivedQuantities",
    "MemoryDistribution",
    "MetaorderSpec",
    "ModelParams",
    "StockRecord",
    "derive",
    "params_from_market",
]
