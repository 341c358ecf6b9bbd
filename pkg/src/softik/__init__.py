"""Learning-based inverse kinematics for soft continuum robots."""

from .robots import (
    PLANAR_FINGER,
    THREE_CHAMBER,
    ActuationRangeError,
    RealTwin,
    RobotSpec,
    ValidationError,
    WorkspaceStats,
    body_curve,
    fk_real,
    fk_virtual,
    identity_twin,
    jacobian_virtual,
    load_robot_config,
    make_twin,
    named_spec,
    save_robot_config,
    planar_finger_spec,
    real_twin_map,
    three_chamber_spec,
    workspace_stats,
)

__version__ = "0.1.0"
