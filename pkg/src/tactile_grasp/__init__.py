"""Tactile grasping simulation: joint-torque sensing with a learned bias
correction, wrench recovery through the arm Jacobian, and force/torque
feedback control of the hand approach."""

from .arm import ArmModel, JointState, Pose, forward_kinematics, geometric_jacobian, singularity_measure
from .calibration import BiasModel, SinusoidBias, TrainConfig, train_bias_model
from .contact import ContactWorld
from .controller import ControllerParams, predicted_steady_state
from .errors import (
    ConfigError,
    FrameError,
    InvalidArgumentError,
    InvalidRotationError,
    SingularityError,
    TactileGraspError,
    TrainingError,
)
from .sim import Scenario, SimLog, analyze, run_grasp
from .wrench import Frame, ThresholdFilter, Wrench, transform_wrench

__version__ = "0.1.0"

__all__ = [
    "ArmModel",
    "BiasModel",
    "ConfigError",
    "ContactWorld",
    "ControllerParams",
    "Frame",
    "FrameError",
    "InvalidArgumentError",
    "InvalidRotationError",
    "JointState",
    "Pose",
    "Scenario",
    "SimLog",
    "SingularityError",
    "SinusoidBias",
    "TactileGraspError",
    "ThresholdFilter",
    "TrainConfig",
    "TrainingError",
    "Wrench",
    "analyze",
    "forward_kinematics",
    "geometric_jacobian",
    "predicted_steady_state",
    "run_grasp",
    "singularity_measure",
    "train_bias_model",
    "transform_wrench",
]
