"""Malliavin calculus for pure-jump Lévy processes on a simulated canonical space."""

from .kernels import BACKEND as KERNEL_BACKEND
from .levy_model import (
    ControlMeasure,
    FiniteDiscrete,
    Interval,
    IntervalSet,
    LevyTriplet,
    Rect,
    SectorPartition,
    TruncatedStable,
    TwoSidedExponential,
    build_partition,
    control_measure,
    nu_mass,
)
from .canonical_path import JumpBatch, JumpList, CanonicalSampler, add_jump, evaluate_path, sample_jump_list
from .functionals import Coordinate, Cylindrical, RunningSup, Slot, TimeIntegral, eval_functional, parametric_eval
from .malliavin import chain_rule_report, derivative_field, phi_derivative, psi_derivative
from .chaos import estimate_chaos_coefficient, estimate_coefficients, multiple_integral, random_measure
from .transfer import IncrementSampler, run_field_transfer_test, run_transfer_test

__version__ = "0.1.0"
