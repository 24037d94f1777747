"""Driving-risk potential-field model: risk surrogates, car-following simulation and calibration."""

__version__ = "0.1.0"

from .baselines import IdmParams, idm_accel
from .core import (
    BodyContact,
    ConstraintViolation,
    DegenerateDistance,
    DrsParams,
    FieldVector,
    Restriction,
    RiskBreakdown,
    VehicleState,
    euclidean_distance,
    to_vehicle_frame,
    virtual_distance,
)
from .dynamics import DrsModel, IdmModel, ReplayModel, SimulationResult, simulate_pair, step
from .risk import (
    desired_velocity,
    interactive_acceleration_1d,
    interactive_field,
    restriction_acceleration,
    restriction_field,
    speed_acceleration,
    speed_field,
    total_risk,
    virtual_energy,
)
