"""Adaptive internal-model output regulation with a least-squares identifier.

Modules
-------
numerics        small dense linear algebra, RK4, Routh-Hurwitz, quadrature
plant           normal-form plant, chain structure, friend input
internal_model  internal-model unit and linear prediction models
identifier      least-squares identifier, derivative observer, offline oracles
regulator       high-gain stabilizer, gain sets and the assembled regulator
scenarios       VTOL example and a linear benchmark with steady-state oracles
simulation      closed-loop integration, records, sweeps and metrics
cli             command-line front end
"""

from .errors import (
    ConfigError,
    CorruptedState,
    DivergedRun,
    IntegrationBlowup,
    ModelEvaluationError,
    NotPositiveDefinite,
    RegulatorError,
    ShapeMismatch,
    SingularAttitude,
    SingularGram,
)
from .regulator import GainSet, tuning_schedule
from .scenarios import LinearBenchmark, VtolParams, VtolScenario, linear_benchmark
from .simulation import simulate, sweep, tail_sup, theorem1_ratio

__version__ = "0.1.0"
