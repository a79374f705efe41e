"""irflab: a Monte Carlo laboratory for impulse response estimators.

Simulates five-variable macro DGPs from a calibrated dynamic factor
model, computes their exact population impulse responses under observed
shock, proxy, and recursive identification, runs a menu of direct
projection and iterated VAR estimators over them, and evaluates the
results under a weighted bias-variance loss.  Closed-form asymptotics
for a drifting near-AR(1) testbed serve as validation oracles.
"""

from . import analytic, calibration, cli, dgp, estimators, harness, numerics

__all__ = [
    "analytic",
    "calibration",
    "cli",
    "dgp",
    "estimators",
    "harness",
    "numerics",
]

__version__ = "0.1.0"
