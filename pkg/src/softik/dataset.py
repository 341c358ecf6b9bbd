"""Actuator-space grid sampling, paired twin sampling, splits and file IO.

Dataset files are line-oriented text.  The first line holds the metadata as
``#meta {json}``; every following line is one record with fields separated by
`` | ``:

* grid records:   ``c_1 .. c_m | p_1 .. p_n | J_11 .. J_nm``  (J row-major)
* paired records: ``c_1 .. c_m | ps_1 .. ps_n | pr_1 .. pr_n``

Numbers are printed with 17 significant digits, so a write/read/write cycle
is byte-identical.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .robots import (
    RealTwin,
    RobotSpec,
    ValidationError,
    fk_real,
    fk_virtual,
)

UNITS = {"c": "bar", "p": "mm", "J": "mm/bar"}


class ParseError(ValueError):
    """Malformed dataset file; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class DatasetMeta:
    robot: str
    kind: str               # "grid" or "paired"
    N: int                  # grid values per axis (0 when not a full grid)
    m: int
    n: int
    ranges: tuple[tuple[float, float], ...]
    seed: int
    count: int
    variant: str = "full"

    def to_json(self) -> str:
        doc = {
            "robot": self.robot, "kind": self.kind, "N": self.N,
            "m": self.m, "n": self.n,
            "ranges": [[lo, hi] for lo, hi in self.ranges],
            "seed": self.seed, "count": self.count,
            "variant": self.variant, "units": UNITS,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetMeta":
        doc = json.loads(text)
        return cls(robot=doc["robot"], kind=doc["kind"], N=int(doc["N"]),
                   m=int(doc["m"]), n=int(doc["n"]),
                   ranges=tuple((float(lo), float(hi)) for lo, hi in doc["ranges"]),
                   seed=int(doc["seed"]), count=int(doc["count"]),
                   variant=doc.get("variant", "full"))


@dataclass(frozen=True)
class Sample:
    c: np.ndarray
    p_s: np.ndarray
    j_s: np.ndarray  # row-major flattened n*m


@dataclass(frozen=True)
class PairedSample:
    c: np.ndarray
    p_s: np.ndarray
    p_r: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Grid dataset backing the FK and Jacobian surrogates."""

    meta: DatasetMeta
    c: np.ndarray   # (count, m)
    p: np.ndarray   # (count, n)
    j: np.ndarray   # (count, n*m) row-major

    def __len__(self) -> int:
        return self.c.shape[0]

    def __getitem__(self, i: int) -> Sample:
        return Sample(c=self.c[i], p_s=self.p[i], j_s=self.j[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass(frozen=True)
class PairedSet:
    """Sim/twin position pairs used for sim-to-real training."""

    meta: DatasetMeta
    c: np.ndarray    # (count, m)
    p_s: np.ndarray  # (count, n)
    p_r: np.ndarray  # (count, n)

    def __len__(self) -> int:
        return self.c.shape[0]

    def __getitem__(self, i: int) -> PairedSample:
        return PairedSample(c=self.c[i], p_s=self.p_s[i], p_r=self.p_r[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def grid_actuations(spec: RobotSpec, per_axis: int) -> np.ndarray:
    """Cartesian grid over the actuation box, endpoints included, first axis
    slowest."""
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in spec.ranges]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def jacobian_virtual_batch(spec: RobotSpec, C: np.ndarray, N: int) -> np.ndarray:
    """Vectorized numeric Jacobians, (count, n, m), same probes as the
    single-point operation."""
    deltas = spec.range_span / (10.0 * N)
    lo, hi = spec.range_lo, spec.range_hi
    cols = []
    for k in range(spec.m):
        center = np.clip(C[:, k], lo[k] + deltas[k], hi[k] - deltas[k])
        cp = C.copy()
        cm = C.copy()
        cp[:, k] = center + deltas[k]
        cm[:, k] = center - deltas[k]
        cols.append((fk_virtual(spec, cp) - fk_virtual(spec, cm)) / (2.0 * deltas[k]))
    return np.stack(cols, axis=-1)


def grid_sample(spec: RobotSpec, N: int, seed: int = 0) -> Dataset:
    """Sample the actuation box on an N-per-axis grid (N^m samples) with
    analytic positions and numeric Jacobians."""
    if N < 2:
        raise ValidationError("grid sampling needs N >= 2 values per axis")
    C = grid_actuations(spec, N)
    P = fk_virtual(spec, C)
    J = jacobian_virtual_batch(spec, C, N).reshape(C.shape[0], spec.n * spec.m)
    meta = DatasetMeta(robot=spec.id, kind="grid", N=N, m=spec.m, n=spec.n,
                       ranges=spec.ranges, seed=seed, count=C.shape[0],
                       variant=spec.variant)
    return Dataset(meta=meta, c=C, p=P, j=J)


def split(dataset, ratio: float, seed: int):
    """Deterministic shuffled partition into (train, test)."""
    if not 0.0 < ratio < 1.0:
        raise ValidationError("split ratio must be in (0, 1)")
    count = len(dataset)
    perm = np.random.default_rng(seed).permutation(count)
    n_train = int(math.floor(ratio * count + 1e-9))
    tr, te = perm[:n_train], perm[n_train:]
    if isinstance(dataset, Dataset):
        make = lambda idx, cnt: Dataset(meta=replace(dataset.meta, count=cnt),
                                        c=dataset.c[idx], p=dataset.p[idx],
                                        j=dataset.j[idx])
    else:
        make = lambda idx, cnt: PairedSet(meta=replace(dataset.meta, count=cnt),
                                          c=dataset.c[idx], p_s=dataset.p_s[idx],
                                          p_r=dataset.p_r[idx])
    return make(tr, len(tr)), make(te, len(te))


def subgrid_side(count: int, m: int) -> int:
    """Smallest per-axis grid side whose m-cube covers `count` samples."""
    side = max(2, math.ceil(count ** (1.0 / m) - 1e-9))
    while side ** m < count:
        side += 1
    while (side - 1) ** m >= count and side > 2:
        side -= 1
    return side


def twin_sample(spec: RobotSpec, twin: RealTwin, count: int, seed: int = 0,
                sim_fk=None) -> PairedSet:
    """Paired (simulated, twin-measured) positions on a uniform actuation
    sub-grid.

    When the sub-grid overshoots `count`, a seeded uniform thinning keeps
    exactly `count` points.  `sim_fk` overrides the simulated-position model
    (used by the degraded-model comparison); the twin side always measures
    the full analytic model.
    """
    if count < 1:
        raise ValidationError("twin_sample needs count >= 1")
    side = subgrid_side(count, spec.m)
    C = grid_actuations(spec, side)
    if C.shape[0] > count:
        keep = np.sort(np.random.default_rng(seed).choice(
            C.shape[0], size=count, replace=False))
        C = C[keep]
    P_s = fk_virtual(spec, C) if sim_fk is None else sim_fk(C)
    P_r = fk_real(spec, twin, C)
    meta = DatasetMeta(robot=spec.id, kind="paired", N=0, m=spec.m, n=spec.n,
                       ranges=spec.ranges, seed=seed, count=C.shape[0],
                       variant=spec.variant)
    return PairedSet(meta=meta, c=C, p_s=P_s, p_r=P_r)


# ---------------------------------------------------------------------------
# file IO


def _fmt_row(*blocks) -> str:
    return " | ".join(" ".join(f"{x:.17g}" for x in blk) for blk in blocks)


def write_dataset(ds, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"#meta {ds.meta.to_json()}\n")
        if isinstance(ds, Dataset):
            for i in range(len(ds)):
                fh.write(_fmt_row(ds.c[i], ds.p[i], ds.j[i]) + "\n")
        else:
            for i in range(len(ds)):
                fh.write(_fmt_row(ds.c[i], ds.p_s[i], ds.p_r[i]) + "\n")


def read_dataset(path, spec: RobotSpec | None = None):
    """Read a dataset file; returns Dataset or PairedSet per the meta kind."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#meta "):
        raise ParseError("missing '#meta' header", line=1)
    try:
        meta = DatasetMeta.from_json(lines[0][len("#meta "):])
    except (json.JSONDecodeError, KeyError) as exc:
        raise ParseError(f"bad meta header: {exc}", line=1) from exc
    if spec is not None:
        if (meta.robot != spec.id or meta.m != spec.m or meta.n != spec.n
                or meta.ranges != spec.ranges):
            raise ValidationError(
                f"dataset meta (robot={meta.robot}, m={meta.m}, n={meta.n}) "
                f"does not match spec {spec.id}")
    widths = {"grid": (meta.m, meta.n, meta.n * meta.m),
              "paired": (meta.m, meta.n, meta.n)}.get(meta.kind)
    if widths is None:
        raise ParseError(f"unknown dataset kind {meta.kind!r}", line=1)
    rows = ([], [], [])
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(" | ")
        if len(parts) != 3:
            raise ParseError("expected 3 ' | '-separated blocks", line=lineno)
        try:
            vals = [np.array([float(x) for x in p.split()]) for p in parts]
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", line=lineno) from exc
        for blk, want, got in zip(("c", "p", "trailing"), widths, vals):
            if got.shape[0] != want:
                raise ParseError(f"{blk} block has {got.shape[0]} fields, "
                                 f"expected {want}", line=lineno)
        for store, val in zip(rows, vals):
            store.append(val)
    got = len(rows[0])
    if got != meta.count:
        last_good = got + 1  # header plus parsed records
        raise ParseError(
            f"expected {meta.count} records but found {got} "
            f"(last good record at line {last_good})", line=last_good)
    arrays = [np.array(r) for r in rows]
    if meta.kind == "grid":
        return Dataset(meta=meta, c=arrays[0], p=arrays[1], j=arrays[2])
    return PairedSet(meta=meta, c=arrays[0], p_s=arrays[1], p_r=arrays[2])


def spacing_report(ds: Dataset) -> dict:
    """Post-hoc grid-resolution report: task-space sample spacing vs the 1%
    of workspace width target (reported, not enforced)."""
    from .robots import workspace_stats

    stats = workspace_stats(ds.p)
    n_side = ds.meta.N
    step = np.array([(hi - lo) / (n_side - 1) for lo, hi in ds.meta.ranges])
    # neighbor spacing along each axis direction of the grid, estimated from
    # the largest Jacobian column response
    Jcols = np.linalg.norm(ds.j.reshape(len(ds), ds.meta.n, ds.meta.m),
                           axis=1)
    max_spacing = float((Jcols * step).max())
    return {
        "width": stats.width,
        "actuation_step": step.tolist(),
        "max_task_spacing": max_spacing,
        "spacing_over_width": max_spacing / stats.width,
        "meets_1pct_target": bool(max_spacing <= 0.01 * stats.width),
    }
