"""Per-robot presets: network shapes, grid resolutions, twin-sample budgets
and training configs.

Shapes follow the hardware study: the finger uses 3x30 for FK and 2x64 for
the Jacobian net, the three-chamber actuator uses 2x35 for both; the
sim-to-real layer is a single hidden layer sized at eta=1/4 of its sample
count.  The Levenberg-Marquardt trainer is the default wherever the normal
matrix stays small; the larger finger nets fall back to Adam, since the
acceptance gates are accuracy-based rather than optimizer-based.
"""
from __future__ import annotations

from dataclasses import dataclass

from .nn import TrainConfig
from .robots import PLANAR_FINGER, THREE_CHAMBER, RobotSpec


@dataclass(frozen=True)
class NetShapes:
    fk_hidden: tuple
    jac_hidden: tuple
    direct_hidden: tuple  # reversed-FK default for the direct-IK baseline


SHAPES = {
    THREE_CHAMBER: NetShapes(fk_hidden=(35, 35), jac_hidden=(35, 35),
                             direct_hidden=(35, 35)),
    PLANAR_FINGER: NetShapes(fk_hidden=(30, 30, 30), jac_hidden=(64, 64),
                             direct_hidden=(30, 30, 30)),
}

GRID_N = {THREE_CHAMBER: 16, PLANAR_FINGER: 29}
TWIN_SAMPLES = {THREE_CHAMBER: 343, PLANAR_FINGER: 620}
S2R_ETA = 0.25
DEFAULT_TWIN_SEED = 7
PAPER_EPOCH_CAP = 13500  # hard cap if early stopping is disabled


def fk_sizes(spec: RobotSpec) -> list[int]:
    return [spec.m, *SHAPES[spec.id].fk_hidden, spec.n]


def jac_sizes(spec: RobotSpec) -> list[int]:
    return [spec.m, *SHAPES[spec.id].jac_hidden, spec.n * spec.m]


def direct_sizes(spec: RobotSpec) -> list[int]:
    return [spec.n, *SHAPES[spec.id].direct_hidden, spec.m]


def fk_train_config(robot_id: str, seed: int = 0) -> TrainConfig:
    if robot_id == THREE_CHAMBER:
        return TrainConfig(max_epochs=40, batch_size=200, target_mse=1e-9,
                           optimizer="lm", seed=seed)
    return TrainConfig(max_epochs=250, batch_size=200, learning_rate=3e-3,
                       target_mse=8e-6, optimizer="first_order", seed=seed)


def jac_train_config(robot_id: str, seed: int = 0) -> TrainConfig:
    if robot_id == THREE_CHAMBER:
        return TrainConfig(max_epochs=22, batch_size=200, target_mse=2e-6,
                           optimizer="lm", seed=seed)
    return TrainConfig(max_epochs=250, batch_size=200, learning_rate=3e-3,
                       target_mse=5e-6, optimizer="first_order", seed=seed)


def s2r_train_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(max_epochs=150, batch_size=200, target_mse=1e-10,
                       optimizer="lm", seed=seed)


def direct_train_config(robot_id: str, seed: int = 0) -> TrainConfig:
    if robot_id == THREE_CHAMBER:
        return TrainConfig(max_epochs=40, batch_size=200, target_mse=1e-9,
                           optimizer="lm", seed=seed)
    return TrainConfig(max_epochs=250, batch_size=200, learning_rate=3e-3,
                       target_mse=8e-6, optimizer="first_order", seed=seed)
