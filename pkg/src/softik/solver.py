"""Jacobian-based iterative IK over the learned model bundle.

Each waypoint is solved by descending the squared-distance objective along
the negative learned gradient with a backtracking line search, clamping every
trial actuation to the admissible ranges.  Iteration stops when the objective
drops below epsilon^2 (epsilon defaults to 0.1% of the workspace width), when
progress stalls, or at the iteration cap.  Path following chains the solves,
warm-starting every waypoint from its predecessor's solution.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .nn import MLP, forward, input_jacobian
from .robots import RobotSpec, ValidationError


class ConfigurationError(ValueError):
    """Bundle is missing or inconsistent with the robot it claims to serve."""


@dataclass
class ModelBundle:
    """Trained networks plus the robot they model.

    ``jac_source`` selects where the model Jacobian comes from: the dedicated
    Jacobian network ("learned") or the analytic gradient of the FK network
    ("fk_gradient", the comparison method).
    """

    net_fk: MLP
    net_jac: MLP | None
    net_s2r: MLP | None
    spec: RobotSpec
    width: float
    jac_source: str = "learned"

    def __post_init__(self):
        m, n = self.spec.m, self.spec.n
        if self.net_fk is None:
            raise ConfigurationError("bundle needs a trained FK network")
        if (self.net_fk.in_dim, self.net_fk.out_dim) != (m, n):
            raise ConfigurationError(
                f"FK network maps {self.net_fk.in_dim}->{self.net_fk.out_dim}, "
                f"robot needs {m}->{n}")
        if self.jac_source == "learned":
            if self.net_jac is None:
                raise ConfigurationError("bundle needs a trained Jacobian network")
            if (self.net_jac.in_dim, self.net_jac.out_dim) != (m, n * m):
                raise ConfigurationError(
                    f"Jacobian network maps {self.net_jac.in_dim}->"
                    f"{self.net_jac.out_dim}, robot needs {m}->{n * m}")
        elif self.jac_source != "fk_gradient":
            raise ConfigurationError(f"unknown jac_source {self.jac_source!r}")
        if self.net_s2r is not None and \
                (self.net_s2r.in_dim, self.net_s2r.out_dim) != (n, n):
            raise ConfigurationError("sim-to-real network must map n->n")
        if not self.width > 0:
            raise ConfigurationError("workspace width must be positive")

    @property
    def uses_s2r(self) -> bool:
        return self.net_s2r is not None

    def without_s2r(self) -> "ModelBundle":
        return ModelBundle(net_fk=self.net_fk, net_jac=self.net_jac,
                           net_s2r=None, spec=self.spec, width=self.width,
                           jac_source=self.jac_source)


@dataclass
class SolverConfig:
    epsilon: float | None = None    # mm; None picks 0.1% of workspace width
    max_iters: int = 50
    initial_step: float | None = None  # None: per-iteration linearized optimum
    shrink: float = 0.5
    max_halvings: int = 20
    stall_window: int = 3
    stall_rel_decrease: float = 1e-8
    record_trace: bool = False

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValidationError("shrink factor must be in (0, 1)")


@dataclass
class IKResult:
    c: np.ndarray
    p_pred: np.ndarray
    residual: float
    iterations: int
    status: str                 # "converged", "stalled", "max_iters"
    wall_time: float
    trace: list = field(default_factory=list)


def objective(target, p) -> float:
    """Squared distance between the waypoint and the predicted tip."""
    target = np.asarray(target, dtype=float)
    p = np.asarray(p, dtype=float)
    if target.shape != p.shape:
        raise ValidationError(f"dimension mismatch {target.shape} vs {p.shape}")
    d = target - p
    return float(d @ d)


def predict(bundle: ModelBundle, c) -> tuple[np.ndarray, np.ndarray]:
    """(simulated position, output position); the second applies the
    sim-to-real map when present, otherwise repeats the first."""
    p_s = forward(bundle.net_fk, c)
    if bundle.net_s2r is None:
        return p_s, p_s
    return p_s, forward(bundle.net_s2r, p_s)


def composed_jacobian(bundle: ModelBundle, c) -> np.ndarray:
    """Model Jacobian at c; with sim-to-real present the chain rule applies
    the s2r input Jacobian evaluated at the simulated position."""
    c = np.asarray(c, dtype=float)
    if bundle.jac_source == "fk_gradient":
        J_s = input_jacobian(bundle.net_fk, c)
    else:
        J_s = forward(bundle.net_jac, c).reshape(bundle.spec.n, bundle.spec.m)
    if bundle.net_s2r is None:
        return J_s
    p_s = forward(bundle.net_fk, c)
    return input_jacobian(bundle.net_s2r, p_s) @ J_s


def grad(bundle: ModelBundle, target, c) -> np.ndarray:
    """Gradient of the IK objective w.r.t. actuation: -2 (target - p)^T J."""
    target = np.asarray(target, dtype=float)
    _, p = predict(bundle, c)
    J = composed_jacobian(bundle, c)
    return -2.0 * (target - p) @ J


def _clamp(spec: RobotSpec, c: np.ndarray) -> np.ndarray:
    return np.clip(c, spec.range_lo, spec.range_hi)


def solve_waypoint(bundle: ModelBundle, target, c0, cfg: SolverConfig | None = None
                   ) -> IKResult:
    """Iterative descent from c0 toward the waypoint; returns best-so-far."""
    cfg = cfg or SolverConfig()
    target = np.asarray(target, dtype=float)
    if target.shape != (bundle.spec.n,):
        raise ValidationError(f"target must have {bundle.spec.n} coordinates")
    eps = cfg.epsilon if cfg.epsilon is not None else 1e-3 * bundle.width
    eps2 = eps * eps
    t_start = time.perf_counter()

    c = _clamp(bundle.spec, np.asarray(c0, dtype=float))
    _, p = predict(bundle, c)
    obj = objective(target, p)
    best_c, best_p, best_obj = c, p, obj
    trace = [obj]
    status = "max_iters"
    iters = 0

    if obj < eps2:
        status = "converged"
    else:
        for it in range(1, cfg.max_iters + 1):
            J = composed_jacobian(bundle, c)
            r = target - p
            d = 2.0 * r @ J          # negative gradient of the objective
            Jd = J @ d
            jd2 = float(Jd @ Jd)
            if jd2 <= 1e-30 or not np.isfinite(jd2):
                status = "stalled"   # singular Jacobian, direction is useless
                break
            step = cfg.initial_step if cfg.initial_step is not None \
                else float(r @ Jd) / jd2
            accepted = False
            for _ in range(cfg.max_halvings + 1):
                c_try = _clamp(bundle.spec, c + step * d)
                _, p_try = predict(bundle, c_try)
                obj_try = objective(target, p_try)
                if obj_try < obj:
                    accepted = True
                    break
                step *= cfg.shrink
            if not accepted:
                status = "stalled"
                break
            c, p, obj = c_try, p_try, obj_try
            iters = it
            trace.append(obj)
            if obj < best_obj:
                best_c, best_p, best_obj = c, p, obj
            if obj < eps2:
                status = "converged"
                break
            w = cfg.stall_window
            if len(trace) > w:
                prev = trace[-1 - w]
                if prev - obj < cfg.stall_rel_decrease * max(prev, 1e-300):
                    status = "stalled"
                    break

    return IKResult(
        c=best_c, p_pred=best_p, residual=float(np.sqrt(best_obj)),
        iterations=iters, status=status,
        wall_time=time.perf_counter() - t_start,
        trace=trace if cfg.record_trace else [],
    )


def follow_path(bundle: ModelBundle, waypoints, c0,
                cfg: SolverConfig | None = None) -> list[IKResult]:
    """Solve waypoints in order, warm-starting each from the previous
    solution."""
    waypoints = np.asarray(waypoints, dtype=float)
    if waypoints.ndim != 2 or waypoints.shape[0] < 1:
        raise ValidationError("follow_path needs at least one waypoint")
    results = []
    c = np.asarray(c0, dtype=float)
    for w in waypoints:
        res = solve_waypoint(bundle, w, c, cfg)
        results.append(res)
        c = res.c
    return results
