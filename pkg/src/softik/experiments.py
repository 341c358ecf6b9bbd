"""End-to-end experiment runners: path following against the analytic or
twin ground truth, scripted interactive positioning, throughput benchmarks,
and the sim-to-real sample-demand study."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import configs
from .baselines import DirectIKNet, solve_direct
from .dataset import split, twin_sample
from .nn import MLP, TrainReport, evaluate, size_s2r, train
from .robots import RealTwin, RobotSpec, ValidationError, fk_real, fk_virtual
from .solver import ModelBundle, SolverConfig, follow_path


@dataclass
class FollowReport:
    """Per-waypoint outcome of one tracking run."""

    waypoints: np.ndarray
    actuations: np.ndarray
    errors: np.ndarray            # tracking error vs ground truth, mm
    residuals: np.ndarray         # model-space solver residuals, mm
    statuses: list
    iterations: np.ndarray
    width: float
    ground_truth: str
    total_time: float

    @property
    def mean_error(self) -> float:
        return float(self.errors.mean())

    @property
    def max_error(self) -> float:
        return float(self.errors.max())

    @property
    def mean_error_pct(self) -> float:
        return 100.0 * self.mean_error / self.width

    @property
    def max_error_pct(self) -> float:
        return 100.0 * self.max_error / self.width

    @property
    def max_consecutive_dc(self) -> float:
        if len(self.actuations) < 2:
            return 0.0
        return float(np.abs(np.diff(self.actuations, axis=0)).max())

    @property
    def mean_time(self) -> float:
        return self.total_time / len(self.waypoints)

    def summary(self) -> dict:
        return {
            "waypoints": int(len(self.waypoints)),
            "ground_truth": self.ground_truth,
            "mean_error_mm": self.mean_error,
            "max_error_mm": self.max_error,
            "mean_error_pct_width": self.mean_error_pct,
            "max_error_pct_width": self.max_error_pct,
            "max_consecutive_dc": self.max_consecutive_dc,
            "mean_iterations": float(self.iterations.mean()),
            "statuses": {s: self.statuses.count(s) for s in set(self.statuses)},
            "total_time_s": self.total_time,
            "waypoints_per_sec": len(self.waypoints) / self.total_time
            if self.total_time > 0 else float("inf"),
        }


def ground_truth_fk(spec: RobotSpec, ground_truth: str, twin: RealTwin | None):
    if ground_truth == "virtual":
        return lambda c: fk_virtual(spec, c)
    if ground_truth == "twin":
        if twin is None:
            raise ValidationError("twin ground truth requested without a twin")
        return lambda c: fk_real(spec, twin, c)
    raise ValidationError(f"unknown ground truth {ground_truth!r}")


def run_follow_experiment(bundle: ModelBundle, waypoints, *,
                          ground_truth: str = "virtual",
                          twin: RealTwin | None = None,
                          c0=None, cfg: SolverConfig | None = None
                          ) -> FollowReport:
    """Track a waypoint list and measure errors against the designated
    ground-truth forward kinematics (the desk-scale stand-in for motion
    capture)."""
    waypoints = np.asarray(waypoints, dtype=float)
    gt = ground_truth_fk(bundle.spec, ground_truth, twin)
    start = np.zeros(bundle.spec.m) if c0 is None else np.asarray(c0, dtype=float)
    t0 = time.perf_counter()
    results = follow_path(bundle, waypoints, start, cfg)
    total = time.perf_counter() - t0
    C = np.stack([r.c for r in results])
    tips = gt(C)
    errors = np.linalg.norm(tips - waypoints, axis=1)
    return FollowReport(
        waypoints=waypoints, actuations=C, errors=errors,
        residuals=np.array([r.residual for r in results]),
        statuses=[r.status for r in results],
        iterations=np.array([r.iterations for r in results]),
        width=bundle.width, ground_truth=ground_truth, total_time=total,
    )


def follow_direct(direct: DirectIKNet, waypoints, *, width: float,
                  ground_truth: str = "virtual", twin: RealTwin | None = None
                  ) -> FollowReport:
    """Track the same waypoints with the no-iteration direct-IK baseline."""
    waypoints = np.asarray(waypoints, dtype=float)
    gt = ground_truth_fk(direct.spec, ground_truth, twin)
    t0 = time.perf_counter()
    C = np.stack([solve_direct(direct, w) for w in waypoints])
    total = time.perf_counter() - t0
    errors = np.linalg.norm(gt(C) - waypoints, axis=1)
    return FollowReport(
        waypoints=waypoints, actuations=C, errors=errors,
        residuals=errors.copy(), statuses=["direct"] * len(waypoints),
        iterations=np.zeros(len(waypoints), dtype=int),
        width=width, ground_truth=ground_truth, total_time=total,
    )


@dataclass
class PositioningReport:
    targets: np.ndarray
    errors: np.ndarray            # (targets, repeats) tracking errors, mm
    config_spread: np.ndarray     # max pairwise |dc|_inf per target
    width: float

    def summary(self) -> dict:
        return {
            "targets": int(len(self.targets)),
            "repeats": int(self.errors.shape[1]),
            "mean_error_mm": [float(e) for e in self.errors.mean(axis=1)],
            "deviation_range_mm": [float(e) for e in
                                   self.errors.max(axis=1) - self.errors.min(axis=1)],
            "max_error_pct_width": float(100.0 * self.errors.max() / self.width),
            "config_spread": [float(s) for s in self.config_spread],
        }


def run_positioning_experiment(bundle: ModelBundle, targets, repeats: int = 10, *,
                               ground_truth: str = "virtual",
                               twin: RealTwin | None = None,
                               noise_sigma: float = 0.0, seed: int = 0,
                               cfg: SolverConfig | None = None
                               ) -> PositioningReport:
    """Repeated independent solves from zero initial actuation.

    The solver is deterministic, so the per-target deviation range is zero
    unless measurement noise injection is enabled.
    """
    from .solver import solve_waypoint

    targets = np.asarray(targets, dtype=float)
    gt = ground_truth_fk(bundle.spec, ground_truth, twin)
    rng = np.random.default_rng(seed)
    zero = np.zeros(bundle.spec.m)
    errors = np.zeros((len(targets), repeats))
    spread = np.zeros(len(targets))
    for i, target in enumerate(targets):
        cs = []
        for j in range(repeats):
            res = solve_waypoint(bundle, target, zero, cfg)
            tip = gt(res.c)
            if noise_sigma > 0:
                tip = tip + rng.normal(0.0, noise_sigma, size=tip.shape)
            errors[i, j] = np.linalg.norm(tip - target)
            cs.append(res.c)
        cs = np.stack(cs)
        spread[i] = float(np.abs(cs[:, None, :] - cs[None, :, :]).max())
    return PositioningReport(targets=targets, errors=errors,
                             config_spread=spread, width=bundle.width)


# ---------------------------------------------------------------------------
# benchmarks


@dataclass
class BenchReport:
    methods: dict = field(default_factory=dict)   # name -> timing stats
    hb_scaling: list = field(default_factory=list)

    def summary(self) -> dict:
        return {"methods": self.methods, "hb_scaling": self.hb_scaling}


def _fixed_iteration_config(iters: int) -> SolverConfig:
    # epsilon tiny and stall checks off: every waypoint runs the full budget
    return SolverConfig(epsilon=1e-12, max_iters=iters, stall_rel_decrease=0.0,
                        stall_window=10 ** 6)


def bench(bundle: ModelBundle, direct: DirectIKNet | None, waypoints, *,
          iterations_fixed: int = 10, hb_shapes=(32, 64, 128), seed: int = 0
          ) -> BenchReport:
    """Throughput and per-iteration cost of the three IK strategies.

    The "jacobian"/"fk_gradient" rows solve to convergence (real throughput);
    the "*_fixed" rows pin the iteration count for a fair per-iteration
    comparison; hb scaling times untrained nets of growing total neuron
    count, reported as data only.
    """
    waypoints = np.asarray(waypoints, dtype=float)
    report = BenchReport()

    def time_follow(b, cfg, name):
        t0 = time.perf_counter()
        results = follow_path(b, waypoints, np.zeros(b.spec.m), cfg)
        dt = time.perf_counter() - t0
        report.methods[name] = {
            "mean_time_ms": 1000.0 * dt / len(waypoints),
            "waypoints_per_sec": len(waypoints) / dt,
            "mean_iterations": float(np.mean([r.iterations for r in results])),
            "converged": sum(r.status == "converged" for r in results),
        }

    time_follow(bundle, None, "jacobian")
    time_follow(bundle, _fixed_iteration_config(iterations_fixed), "jacobian_fixed")
    fk_grad = replace(bundle, jac_source="fk_gradient")
    time_follow(fk_grad, _fixed_iteration_config(iterations_fixed), "fk_gradient_fixed")
    if direct is not None:
        t0 = time.perf_counter()
        for w in waypoints:
            solve_direct(direct, w)
        dt = time.perf_counter() - t0
        report.methods["direct"] = {
            "mean_time_ms": 1000.0 * dt / len(waypoints),
            "waypoints_per_sec": len(waypoints) / dt,
            "mean_iterations": 0.0,
            "converged": len(waypoints),
        }

    m, n = bundle.spec.m, bundle.spec.n
    for hb in hb_shapes:
        b_neurons = hb // 2
        sizes_fk = [m, b_neurons, b_neurons, n]
        sizes_j = [m, b_neurons, b_neurons, n * m]
        probe = ModelBundle(net_fk=MLP.create(sizes_fk, seed=seed),
                            net_jac=MLP.create(sizes_j, seed=seed),
                            net_s2r=None, spec=bundle.spec, width=bundle.width)
        t0 = time.perf_counter()
        follow_path(probe, waypoints[: min(40, len(waypoints))],
                    np.zeros(m), _fixed_iteration_config(iterations_fixed))
        dt = time.perf_counter() - t0
        report.hb_scaling.append({
            "hb": hb,
            "mean_time_ms": 1000.0 * dt / min(40, len(waypoints)),
        })
    return report


# ---------------------------------------------------------------------------
# sim-to-real training and the sample-demand study


def train_s2r(pairs, seed: int = 0, eta: float = configs.S2R_ETA,
              width: float | None = None) -> tuple[MLP, "TrainReport"]:
    """Fit the single-hidden-layer sim-to-real net on position pairs,
    sized at eta times the sample count."""
    n = pairs.p_s.shape[1]
    hidden = size_s2r(len(pairs), eta)
    net = MLP.create([n, hidden, n], seed=seed)
    tr, te = split(pairs, 0.7, seed=seed)
    cfg = configs.s2r_train_config(seed=seed)
    report = train(net, (tr.p_s, tr.p_r), (te.p_s, te.p_r), cfg, width=width)
    return net, report


def s2r_demand_curve(spec: RobotSpec, twin: RealTwin, counts, *, width: float,
                     seed: int = 0, sim_fk=None) -> list[dict]:
    """Mean held-out prediction error (% width) of the sim-to-real net as a
    function of the hardware-sample budget."""
    out = []
    for count in counts:
        pairs = twin_sample(spec, twin, count, seed=seed, sim_fk=sim_fk)
        net, _ = train_s2r(pairs, seed=seed, width=width)
        _, te = split(pairs, 0.7, seed=seed)
        stats = evaluate(net, te.p_s, te.p_r, workspace_width=width)
        out.append({"count": int(count), "mean_pct_width": stats["mean_pct_width"],
                    "max_pct_width": stats["max_pct_width"]})
    return out


def min_count_reaching(curve, threshold_pct: float = 1.0):
    """Smallest sample budget whose mean error is at or below the threshold;
    None when the curve never gets there."""
    for row in curve:
        if row["mean_pct_width"] <= threshold_pct:
            return row["count"]
    return None


# ---------------------------------------------------------------------------
# report files


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def save_report(report: dict, path) -> None:
    """Machine-readable results file consumed by the plot-data export."""
    with open(path, "w") as fh:
        json.dump(_jsonable(report), fh, indent=1)


def load_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def export_plot_data(report: FollowReport, out_dir) -> list:
    """Write x/y column files for the tracking-error and actuation figures."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []

    def table(name, header, rows):
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write("# " + " ".join(header) + "\n")
            for row in rows:
                fh.write(" ".join(f"{v:.10g}" for v in row) + "\n")
        written.append(path)

    idx = np.arange(len(report.waypoints))
    table("tracking_error.txt", ["waypoint", "error_mm"],
          np.stack([idx, report.errors], axis=1))
    cols = [f"c{i+1}" for i in range(report.actuations.shape[1])]
    table("actuation.txt", ["waypoint"] + cols,
          np.concatenate([idx[:, None], report.actuations], axis=1))
    table("iterations.txt", ["waypoint", "iterations"],
          np.stack([idx, report.iterations], axis=1))
    return written
