"""Comparison methods: direct IK-mapping regression and the Jacobian taken
from the FK network's analytic gradient."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .nn import MLP, TrainConfig, TrainReport, forward, input_jacobian, train
from .robots import RobotSpec
from .solver import ModelBundle


@dataclass
class DirectIKNet:
    """A network regressing actuation directly from the target position."""

    net: MLP
    spec: RobotSpec


def train_direct_ik(dataset, cfg: TrainConfig, hidden: tuple,
                    width: float | None = None) -> tuple[DirectIKNet, TrainReport]:
    """Regress c against p over the grid dataset (position -> actuation).

    One-to-many collisions on redundant robots are left to the regressor;
    that is the point of the comparison.
    """
    from .dataset import split

    spec_sizes = [dataset.p.shape[1], *hidden, dataset.c.shape[1]]
    net = MLP.create(spec_sizes, seed=cfg.seed)
    train_set, test_set = split(dataset, 0.7, seed=cfg.seed)
    report = train(net, (train_set.p, train_set.c), (test_set.p, test_set.c),
                   cfg, width=width)
    from .robots import named_spec

    spec = named_spec(dataset.meta.robot, variant=dataset.meta.variant)
    return DirectIKNet(net=net, spec=spec), report


def solve_direct(dik: DirectIKNet, target) -> np.ndarray:
    """Single forward pass, clamped to the actuation ranges. No iteration."""
    c = forward(dik.net, np.asarray(target, dtype=float))
    return np.clip(c, dik.spec.range_lo, dik.spec.range_hi)


def jacobian_via_fk_net(net_fk: MLP, c) -> np.ndarray:
    """Model Jacobian obtained by differentiating the FK network itself."""
    return input_jacobian(net_fk, np.asarray(c, dtype=float))


def fk_gradient_bundle(bundle: ModelBundle) -> ModelBundle:
    """The same bundle with its Jacobian routed through the FK-net gradient."""
    return replace(bundle, jac_source="fk_gradient")
