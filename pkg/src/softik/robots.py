"""Analytic soft-robot models: forward kinematics, numeric Jacobians, and a
synthetic hardware twin.

Two robot archetypes are supported:

* ``three_chamber`` -- a pneumatic actuator with three chambers at 120 degrees
  around the base circle.  Pressure elongates a chamber, the body bends away
  from it and extends with the mean pressure.  Modelled as one constant
  curvature arc (m=3 actuators, n=3 task dims).
* ``planar_finger`` -- three serially connected finger segments moving in the
  xy plane.  Signed pressure bends a segment left/right as a constant
  curvature arc of fixed length (m=3, n=2, redundant).

Units are fixed throughout: mm for positions and lengths, bar for pressures,
rad for angles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

THREE_CHAMBER = "three_chamber"
PLANAR_FINGER = "planar_finger"

# series switch-over for the straight-segment limit of (1-cos t)/t^2, sin(t)/t
_SMALL_ANGLE = 1e-6


class ValidationError(ValueError):
    """Malformed input: wrong dimension, non-finite values, bad parameters."""


class ActuationRangeError(ValueError):
    """Actuation vector outside the robot's admissible pressure ranges."""


@dataclass(frozen=True)
class RobotSpec:
    """Geometry and actuation ranges of one robot archetype.

    ``geometry`` keys: three_chamber uses L0 (rest length, mm), d (chamber
    offset radius, mm), beta (pressure-to-length gain, mm/bar); planar_finger
    uses L (segment rest length, mm) and theta_max (bend at full pressure,
    rad).  ``variant`` selects deliberately degraded models used in the
    model-comparison experiments ("full", "no_extension", "single_arc").
    """

    id: str
    m: int
    n: int
    ranges: tuple[tuple[float, float], ...]
    geometry: dict[str, float] = field(default_factory=dict)
    variant: str = "full"

    def __post_init__(self):
        if self.id not in (THREE_CHAMBER, PLANAR_FINGER):
            raise ValidationError(f"unknown robot id {self.id!r}")
        if len(self.ranges) != self.m:
            raise ValidationError("ranges must have one (min,max) pair per actuator")
        for lo, hi in self.ranges:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValidationError(f"bad actuation range ({lo}, {hi})")
        for key, val in self.geometry.items():
            if not (math.isfinite(val) and val > 0):
                raise ValidationError(f"geometry parameter {key}={val} must be positive")

    @property
    def range_lo(self) -> np.ndarray:
        return np.array([r[0] for r in self.ranges], dtype=float)

    @property
    def range_hi(self) -> np.ndarray:
        return np.array([r[1] for r in self.ranges], dtype=float)

    @property
    def range_span(self) -> np.ndarray:
        return self.range_hi - self.range_lo


def three_chamber_spec(L0: float = 60.0, d: float = 10.0, beta: float = 8.0,
                       p_max: float = 3.0, variant: str = "full") -> RobotSpec:
    """Three-chamber extending/bending actuator, pressures in [0, p_max] bar."""
    return RobotSpec(
        id=THREE_CHAMBER, m=3, n=3,
        ranges=((0.0, p_max),) * 3,
        geometry={"L0": L0, "d": d, "beta": beta},
        variant=variant,
    )


def planar_finger_spec(L: float = 50.0, theta_max: float = 2.0 * math.pi / 3.0,
                       p_max: float = 3.0, variant: str = "full") -> RobotSpec:
    """Planar three-segment finger, signed pressures in [-p_max, p_max] bar."""
    return RobotSpec(
        id=PLANAR_FINGER, m=3, n=2,
        ranges=((-p_max, p_max),) * 3,
        geometry={"L": L, "theta_max": theta_max},
        variant=variant,
    )


def named_spec(robot_id: str, variant: str = "full") -> RobotSpec:
    if robot_id == THREE_CHAMBER:
        return three_chamber_spec(variant=variant)
    if robot_id == PLANAR_FINGER:
        return planar_finger_spec(variant=variant)
    raise ValidationError(f"unknown robot id {robot_id!r}")


def _as_actuation(spec: RobotSpec, c, check_range: bool = True) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != spec.m:
        raise ValidationError(f"actuation must have {spec.m} entries, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValidationError("actuation contains non-finite values")
    if check_range:
        lo, hi = spec.range_lo, spec.range_hi
        # 1e-9 bar slack absorbs round-off from clamping at the bounds
        if np.any(c < lo - 1e-9) or np.any(c > hi + 1e-9):
            raise ActuationRangeError(
                f"actuation {np.array2string(c, precision=4)} outside ranges {spec.ranges}")
    return c


def _as_point(n: int, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != n:
        raise ValidationError(f"point must have {n} coordinates, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("point contains non-finite values")
    return p


def _arc_g(theta: np.ndarray) -> np.ndarray:
    """(1 - cos t) / t^2, with the even series below the small-angle cutoff."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < _SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    out = (1.0 - np.cos(t)) / (t * t)
    return np.where(small, 0.5 - theta * theta / 24.0, out)


def _arc_s(theta: np.ndarray) -> np.ndarray:
    """sin(t) / t, with the even series below the small-angle cutoff."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < _SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    out = np.sin(t) / t
    return np.where(small, 1.0 - theta * theta / 6.0, out)


def _fk_three_chamber(spec: RobotSpec, c: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """Tip (or intermediate point at arc fraction tau) of the chambered actuator.

    Chamber i sits at angle 120*(i-1) degrees and has length l_i = L0 + beta*c_i.
    The standard three-tube constant-curvature relations give mean arc length,
    curvature and bend plane; the implementation keeps the composition
    x = -2*ell^2*A*g(theta)/(d*lsum) (and its y/B twin) so the straight limit
    stays analytic and equal pressures land exactly on the axis.
    """
    g = spec.geometry
    L0, d, beta = g["L0"], g["d"], g["beta"]
    l = L0 + beta * c
    lsum = l.sum(axis=-1)
    ell = lsum / 3.0
    if spec.variant == "no_extension":
        ell = np.full_like(ell, L0)
    A = (2.0 * l[..., 0] - l[..., 1] - l[..., 2]) / 2.0
    B = math.sqrt(3.0) / 2.0 * (l[..., 1] - l[..., 2])
    theta = 2.0 * ell * np.sqrt(A * A + B * B) / (d * lsum)
    th = tau * theta
    lt = tau * ell
    # kappa*cos(phi) = -2A/(d*lsum) and kappa*sin(phi) = -2B/(d*lsum), so the
    # radial displacement (1-cos th)/kappa becomes lt^2 * g(th) * kappa*cos/sin
    radial = -2.0 * lt * lt * _arc_g(th) / (d * lsum)
    x = radial * A
    y = radial * B
    z = lt * _arc_s(th)
    return np.stack([x, y, z], axis=-1)


def _finger_thetas(spec: RobotSpec, c: np.ndarray) -> np.ndarray:
    g = spec.geometry
    p_hi = spec.range_hi[0]
    return g["theta_max"] * c / p_hi


def _fk_planar_finger(spec: RobotSpec, c: np.ndarray) -> np.ndarray:
    """Tip of three serially composed planar arcs; positive pressure bends CCW.

    The straight finger points along +y, so c = 0 lands at (0, 3L).
    """
    g = spec.geometry
    L = g["L"]
    thetas = _finger_thetas(spec, c)
    if spec.variant == "single_arc":
        th = thetas.sum(axis=-1)
        chord_t = 3.0 * L * _arc_s(th)
        chord_n = 3.0 * L * th * _arc_g(th)
        # heading starts at +y: rotate the local (tangent, normal) chord by pi/2
        return np.stack([-chord_n, chord_t], axis=-1)
    x = np.zeros(c.shape[:-1])
    y = np.zeros(c.shape[:-1])
    beta = np.full(c.shape[:-1], math.pi / 2.0)
    for i in range(spec.m):
        th = thetas[..., i]
        chord_t = L * _arc_s(th)
        chord_n = L * th * _arc_g(th)
        cb, sb = np.cos(beta), np.sin(beta)
        x = x + cb * chord_t - sb * chord_n
        y = y + sb * chord_t + cb * chord_n
        beta = beta + th
    return np.stack([x, y], axis=-1)


def fk_virtual(spec: RobotSpec, c) -> np.ndarray:
    """Analytic forward kinematics: actuation (bar) to tip position (mm).

    Accepts a single actuation vector of shape (m,) or a batch (..., m);
    returns matching (n,) or (..., n).
    """
    c = _as_actuation(spec, c)
    if spec.id == THREE_CHAMBER:
        return _fk_three_chamber(spec, c)
    return _fk_planar_finger(spec, c)


def central_difference_jacobian(f, c: np.ndarray, deltas: np.ndarray,
                                lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of f at c with per-axis probe steps.

    Probe centers are shifted inward where c +/- delta would leave [lo, hi],
    keeping the central formula valid at the range boundaries.
    """
    c = np.asarray(c, dtype=float)
    m = c.shape[-1]
    center = np.clip(c, lo + deltas, hi - deltas)
    probes = np.repeat(c[None, :], 2 * m, axis=0)
    for k in range(m):
        probes[2 * k, k] = center[k] + deltas[k]
        probes[2 * k + 1, k] = center[k] - deltas[k]
    vals = f(probes)
    cols = [(vals[2 * k] - vals[2 * k + 1]) / (2.0 * deltas[k]) for k in range(m)]
    return np.stack(cols, axis=-1)


def jacobian_virtual(spec: RobotSpec, c, N: int) -> np.ndarray:
    """Numeric n x m Jacobian of fk_virtual (mm/bar).

    Probe step per axis is 1/(10N) of that axis's actuation range, matching
    the grid resolution used for dataset generation.
    """
    if N < 1:
        raise ValidationError("N must be >= 1")
    c = _as_actuation(spec, c)
    deltas = spec.range_span / (10.0 * N)
    if c.ndim == 1:
        return central_difference_jacobian(
            lambda cc: fk_virtual(spec, cc), c, deltas, spec.range_lo, spec.range_hi)
    return np.stack([
        central_difference_jacobian(
            lambda cc: fk_virtual(spec, cc), ci, deltas, spec.range_lo, spec.range_hi)
        for ci in c.reshape(-1, spec.m)
    ]).reshape(c.shape[:-1] + (spec.n, spec.m))


def body_curve(spec: RobotSpec, c, points_per_segment: int = 24) -> np.ndarray:
    """Discretized centerline of the robot body for rendering, base included."""
    c = _as_actuation(spec, c)
    if c.ndim != 1:
        raise ValidationError("body_curve takes a single actuation vector")
    if spec.id == THREE_CHAMBER:
        taus = np.linspace(0.0, 1.0, points_per_segment + 1)
        return np.stack([_fk_three_chamber(spec, c, tau=t) for t in taus])
    g = spec.geometry
    L = g["L"]
    thetas = _finger_thetas(spec, c)
    if spec.variant == "single_arc":
        thetas = np.array([thetas.sum()])
        L = 3.0 * g["L"]
    pts = [np.zeros(2)]
    pos = np.zeros(2)
    beta = math.pi / 2.0
    for th in np.atleast_1d(thetas):
        for frac in np.linspace(0.0, 1.0, points_per_segment + 1)[1:]:
            tt = frac * th
            chord_t = frac * L * _arc_s(tt)
            chord_n = frac * L * tt * _arc_g(tt)
            cb, sb = math.cos(beta), math.sin(beta)
            pts.append(pos + np.array([cb * chord_t - sb * chord_n,
                                       sb * chord_t + cb * chord_n]))
        pos = pts[-1]
        beta += th
    return np.stack(pts)


# ---------------------------------------------------------------------------
# synthetic hardware twin


@dataclass(frozen=True)
class RealTwin:
    """Deterministic smooth warp standing in for physical hardware.

    Maps a model-space position to the "measured" one:
    p_real = affine @ p + offset + sum_j amp_j * exp(-|p - mu_j|^2 / (2 sigma_j^2)).
    """

    affine: np.ndarray
    offset: np.ndarray
    warp_centers: np.ndarray
    warp_amplitudes: np.ndarray
    warp_widths: np.ndarray
    seed: int = 0

    @property
    def n(self) -> int:
        return self.offset.shape[0]


def identity_twin(n: int) -> RealTwin:
    return RealTwin(affine=np.eye(n), offset=np.zeros(n),
                    warp_centers=np.zeros((0, n)), warp_amplitudes=np.zeros((0, n)),
                    warp_widths=np.zeros(0), seed=0)


def real_twin_map(twin: RealTwin, p_s) -> np.ndarray:
    """Apply the twin warp to one point (n,) or a batch (..., n)."""
    p = _as_point(twin.n, p_s)
    out = p @ twin.affine.T + twin.offset
    for mu, amp, sig in zip(twin.warp_centers, twin.warp_amplitudes, twin.warp_widths):
        d2 = np.sum((p - mu) ** 2, axis=-1, keepdims=True)
        out = out + amp * np.exp(-d2 / (2.0 * sig * sig))
    return out


def fk_real(spec: RobotSpec, twin: RealTwin, c) -> np.ndarray:
    """Twin-measured tip position: real_twin_map applied to fk_virtual."""
    return real_twin_map(twin, fk_virtual(spec, c))


def _grid_points(spec: RobotSpec, per_axis: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in spec.ranges]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def make_twin(spec: RobotSpec, seed: int, peak_fraction: float = 0.045,
              n_bumps: int = 4) -> RealTwin:
    """Build the default seeded twin, calibrated on a workspace grid.

    The displacement field is scaled so its largest magnitude over the sampled
    workspace equals peak_fraction of the workspace width (default 4.5%,
    inside the required [3%, 6%] band), while the analytic Lipschitz bound of
    the warp stays comfortably below 1.2.
    """
    rng = np.random.default_rng(seed)
    pts = fk_virtual(spec, _grid_points(spec, 9))
    width = float(np.max(pts.max(axis=0) - pts.min(axis=0)))
    n = spec.n

    R = rng.uniform(-1.0, 1.0, size=(n, n))
    R /= np.linalg.norm(R, ord=2)
    affine = np.eye(n) + 0.01 * R

    offset = rng.uniform(-0.5, 0.5, size=n)
    centers = rng.uniform(pts.min(axis=0), pts.max(axis=0), size=(n_bumps, n))
    widths = rng.uniform(0.30, 0.50, size=n_bumps) * width
    dirs = rng.normal(size=(n_bumps, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    amps = dirs * rng.uniform(0.5, 1.0, size=(n_bumps, 1))

    def bump_field(p):
        out = np.zeros_like(p)
        for mu, amp, sig in zip(centers, amps, widths):
            d2 = np.sum((p - mu) ** 2, axis=-1, keepdims=True)
            out = out + amp * np.exp(-d2 / (2.0 * sig * sig))
        return out

    aff_part = pts @ (affine - np.eye(n)).T
    target = peak_fraction * width
    if float(np.linalg.norm(aff_part, axis=1).max()) >= target:
        raise ValidationError("affine perturbation alone exceeds the warp budget")

    for _ in range(6):
        u = offset + bump_field(pts)
        u_peak = float(np.linalg.norm(u, axis=1).max())
        offset = offset / u_peak
        amps = amps / u_peak
        u = offset + bump_field(pts)

        def peak(s):
            return float(np.linalg.norm(aff_part + s * u, axis=1).max())

        hi = 1.0
        while peak(hi) < target:
            hi *= 2.0
        lo_s = 0.0
        for _ in range(80):
            mid = 0.5 * (lo_s + hi)
            if peak(mid) < target:
                lo_s = mid
            else:
                hi = mid
        scale = 0.5 * (lo_s + hi)
        # max gradient of a unit gaussian bump is exp(-1/2)/sigma
        lip = 0.01 + math.exp(-0.5) * float(
            np.sum(scale * np.linalg.norm(amps, axis=1) / widths))
        if lip <= 0.17:
            break
        amps = amps * 0.6  # shift budget from bumps toward the offset
    else:
        raise ValidationError("twin calibration failed to meet the Lipschitz budget")

    return RealTwin(affine=affine, offset=scale * offset,
                    warp_centers=centers, warp_amplitudes=scale * amps,
                    warp_widths=widths, seed=seed)


# ---------------------------------------------------------------------------
# workspace statistics


@dataclass(frozen=True)
class WorkspaceStats:
    aabb_min: np.ndarray
    aabb_max: np.ndarray
    width: float
    sample_hull: np.ndarray

    def contains(self, p, pad: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.aabb_min - pad) and np.all(p <= self.aabb_max + pad))


def workspace_stats(points, hull_limit: int = 512) -> WorkspaceStats:
    """AABB, width (largest AABB side) and a rendering hull for sampled tips."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValidationError("workspace_stats needs a non-empty (count, n) array")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("workspace points contain non-finite values")
    aabb_min = pts.min(axis=0)
    aabb_max = pts.max(axis=0)
    width = float(np.max(aabb_max - aabb_min))
    hull = _hull_points(pts, hull_limit)
    return WorkspaceStats(aabb_min=aabb_min, aabb_max=aabb_max, width=width,
                          sample_hull=hull)


def _hull_points(pts: np.ndarray, limit: int) -> np.ndarray:
    try:
        from scipy.spatial import ConvexHull

        hull = ConvexHull(pts)
        verts = pts[hull.vertices]
    except Exception:  # degenerate clouds (collinear, single point)
        verts = pts
    if verts.shape[0] > limit:
        idx = np.linspace(0, verts.shape[0] - 1, limit).astype(int)
        verts = verts[idx]
    return verts


# ---------------------------------------------------------------------------
# config file IO (YAML, schema documented in the README)


def save_robot_config(path, spec: RobotSpec, twin: RealTwin | None = None) -> None:
    """Write robot geometry (and optionally the twin) as a YAML config."""
    import yaml

    doc: dict = {
        "units": {"pressure": "bar", "position": "mm", "angle": "rad"},
        "robot": {
            "id": spec.id,
            "m": spec.m,
            "n": spec.n,
            "variant": spec.variant,
            "ranges": [[float(lo), float(hi)] for lo, hi in spec.ranges],
            "geometry": {k: float(v) for k, v in spec.geometry.items()},
        },
    }
    if twin is not None:
        doc["twin"] = {
            "seed": int(twin.seed),
            "affine": twin.affine.tolist(),
            "offset": twin.offset.tolist(),
            "warp_centers": twin.warp_centers.tolist(),
            "warp_amplitudes": twin.warp_amplitudes.tolist(),
            "warp_widths": twin.warp_widths.tolist(),
        }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_robot_config(path) -> tuple[RobotSpec, RealTwin | None]:
    """Read a YAML config written by save_robot_config."""
    import yaml

    with open(path) as fh:
        doc = yaml.safe_load(fh)
    try:
        rb = doc["robot"]
        spec = RobotSpec(
            id=rb["id"], m=int(rb["m"]), n=int(rb["n"]),
            ranges=tuple((float(lo), float(hi)) for lo, hi in rb["ranges"]),
            geometry={k: float(v) for k, v in rb["geometry"].items()},
            variant=rb.get("variant", "full"),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed robot config {path}: {exc}") from exc
    twin = None
    if "twin" in doc:
        tw = doc["twin"]
        twin = RealTwin(
            affine=np.asarray(tw["affine"], dtype=float),
            offset=np.asarray(tw["offset"], dtype=float),
            warp_centers=np.asarray(tw["warp_centers"], dtype=float).reshape(-1, spec.n),
            warp_amplitudes=np.asarray(tw["warp_amplitudes"], dtype=float).reshape(-1, spec.n),
            warp_widths=np.asarray(tw["warp_widths"], dtype=float),
            seed=int(tw.get("seed", 0)),
        )
    return spec, twin
