"""Metastable escape of damped mechanical systems under periodic forcing.

The package computes heteroclinic orbits of the damped/antidamped dynamics,
first-order action corrections for periodic forcings, resonance sweeps over
the forcing frequency, a periodic Lennard-Jones cluster example, and direct
Langevin simulation for statistical checks.
"""

from .errors import *  # noqa: F401,F403
from .model import (
    AdditiveSinusoid,
    CallbackModel,
    CriticalPoint,
    Damping,
    DoubleWell,
    GeneralPeriodic,
    Harmonic,
    ParametricSinusoid,
    Pendulum,
    PotentialModel,
    classify_point,
    common_period,
    find_critical_point,
    intrinsic_frequencies,
    make_model,
)
from .hetero import (
    HeteroclinicOrbit,
    fw_action,
    hamiltonian_lift,
    load_orbit,
    save_orbit,
    shoot_downhill,
    shoot_uphill,
)
from .action import delta_S, fourier_integral, minimize_over_t0, total_rate_exponent
from .resonance import gamma_scaling_study, peak_sharpness, sweep

__version__ = "0.1.0"
