"""Localization metrics, loop-closure drift and the map-variant ablation.

Recall is reported as a percentage of *all* queries: a query whose solve did
not converge (or failed outright) counts as a miss at every threshold.
Medians are lower medians, so they are always one of the observed values.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CloudVisionError, EmptyRecords, TooFewPoses
from .features import DEFAULT_LEVELS, DEFAULT_SIGMA
from .formats import TimedPose
from .geometry import pose_error
from .mapcloud import (
    COVIS_MAX_RANGE,
    DEFAULT_VOXEL,
    MAX_SCAN_RANGE,
    IndexedMap,
    _tag_scan_points,
    build_indexed_map,
    interpolate_trajectory,
)
from .retrieval import RetrievalDatabase
from .solver import SolverConfig, localize

CURVE_TRANS_CM = (0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 20.0)
CURVE_ROT_DEG = (0.25, 0.5, 1.0, 2.0, 5.0)
HEADLINE = (0.05, 2.0)  # (m, deg)
VARIANTS = ("indexed_map", "raw_scans")


def default_curve() -> list[tuple[float, float]]:
    return [(cm / 100.0, deg) for cm in CURVE_TRANS_CM for deg in CURVE_ROT_DEG]


@dataclass(frozen=True)
class ErrorRecord:
    query_id: int
    trans_err: float  # m
    rot_err: float  # deg
    converged: bool

    def __post_init__(self) -> None:
        # NaN fails both comparisons, so it is rejected too.
        if not (self.trans_err >= 0.0 and self.rot_err >= 0.0):
            raise ValueError("errors must be non-negative")


@dataclass(frozen=True)
class EvalReport:
    median_trans: float
    median_rot: float
    recall_at: dict  # (trans m, rot deg) -> percent
    curve: list  # [((trans m, rot deg), percent), ...]
    n_queries: int
    n_converged: int = 0

    def to_dict(self) -> dict:
        def rows(pairs):
            return [{"t_trans_m": t, "t_rot_deg": r, "recall_pct": p} for (t, r), p in pairs]

        return {
            "n_queries": self.n_queries,
            "n_converged": self.n_converged,
            "median_trans_m": self.median_trans,
            "median_rot_deg": self.median_rot,
            "recall": rows(self.recall_at.items()),
            "curve": rows(self.curve),
        }

    def to_json(self) -> str:
        return json.dumps(finite_json(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def curve_csv(self) -> str:
        lines = ["t_trans_m,t_rot_deg,recall_pct"]
        lines += [f"{t!r},{r!r},{p!r}" for (t, r), p in self.curve]
        return "\n".join(lines) + "\n"

    def curve_svg(self, width: int = 480, height: int = 320) -> str:
        return render_curve_svg(self.curve, width, height)


def finite_json(obj):
    # JSON has no inf/nan; failed solves are reported as null.
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: finite_json(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [finite_json(v) for v in obj]
    return obj


def lower_median(values) -> float:
    v = np.sort(np.asarray(values, dtype=np.float64))
    return float(v[(v.size - 1) // 2])


def compute_report(records, thresholds=(HEADLINE,), curve=None) -> EvalReport:
    """Medians and recall percentages over a non-empty list of records."""
    records = list(records)
    if not records:
        raise EmptyRecords("no records to evaluate")
    te = np.array([r.trans_err for r in records], dtype=np.float64)
    re = np.array([r.rot_err for r in records], dtype=np.float64)
    ok = np.array([r.converged for r in records], dtype=bool)
    n = len(records)

    def recall(t: float, r: float) -> float:
        return 100.0 * int(np.count_nonzero(ok & (te <= t) & (re <= r))) / n

    pairs = [(float(t), float(r)) for t, r in thresholds]
    curve_pairs = default_curve() if curve is None else [(float(t), float(r)) for t, r in curve]
    return EvalReport(
        median_trans=lower_median(te),
        median_rot=lower_median(re),
        recall_at={p: recall(*p) for p in pairs},
        curve=[(p, recall(*p)) for p in curve_pairs],
        n_queries=n,
        n_converged=int(ok.sum()),
    )


def records_from_trajectories(est: list[TimedPose], gt: list[TimedPose], converged=None) -> list[ErrorRecord]:
    """Pair estimates with ground truth by timestamp.

    Ground-truth entries without an estimate become non-converged records
    with infinite error.
    """
    by_time = {tp.timestamp: tp for tp in est}
    out = []
    for i, g in enumerate(gt):
        e = by_time.get(g.timestamp)
        if e is None:
            out.append(ErrorRecord(i, math.inf, math.inf, False))
            continue
        te, re = pose_error(e.pose, g.pose)
        ok = True if converged is None else bool(converged.get(g.timestamp, False))
        out.append(ErrorRecord(i, te, re, ok))
    return out


def loop_drift(traj: list[TimedPose], path_length: float | None = None, measured_gap: float = 0.0):
    """End-point drift of a loop: ``(abs_err m, rel_err fraction)``."""
    if len(traj) < 2:
        raise TooFewPoses(f"need at least 2 poses, got {len(traj)}")
    pos = np.array([tp.pose.t for tp in traj])
    if path_length is None:
        path_length = float(np.sum(np.linalg.norm(np.diff(pos, axis=0), axis=1)))
    if not path_length > 0.0:
        raise ValueError("path length must be positive")
    abs_err = abs(float(np.linalg.norm(pos[-1] - pos[0])) - measured_gap)
    return abs_err, abs_err / path_length


# --- ablation ----------------------------------------------------------------


def raw_scan_map(
    scans,
    lidar_traj,
    db_poses,
    K,
    covis_max_range: float = COVIS_MAX_RANGE,
    max_range: float = MAX_SCAN_RANGE,
) -> IndexedMap:
    """Per-image point sets from the temporally nearest scan only.

    No accumulation and no voxel grid: each database image sees the ring
    lines of one scan, transformed to the world with the trajectory.
    """
    times = np.array([s.timestamp for s in scans])
    chunks, covis, start = [], [], 0
    for tp in db_poses:
        scan = scans[int(np.argmin(np.abs(times - tp.timestamp)))]
        pts = scan.points[np.linalg.norm(scan.points, axis=1) <= max_range]
        world = interpolate_trajectory(lidar_traj, scan.timestamp).apply(pts)
        world = world[_tag_scan_points(world, tp.pose.inverse(), K, covis_max_range)]
        chunks.append(world)
        covis.append(np.arange(start, start + len(world), dtype=np.int64))
        start += len(world)
    points = np.concatenate(chunks) if chunks else np.zeros((0, 3))
    return IndexedMap(points, tuple(covis), 0.0)


@dataclass
class AblationResult:
    variant: str
    report: EvalReport
    records: list = field(default_factory=list)
    map_points: int = 0  # points held by the variant's map
    source_points: int = 0  # points in all input scans

    def to_dict(self) -> dict:
        d = {"variant": self.variant, "map_points": self.map_points, "source_points": self.source_points}
        d.update(self.report.to_dict())
        return d


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("CLOUDVISION_THREADS", "1")))
    except ValueError:
        return 1


def evaluate_queries(
    images,
    gt_poses: list[TimedPose],
    db: RetrievalDatabase,
    map_: IndexedMap,
    K,
    db_images,
    cfg: SolverConfig = SolverConfig(),
    levels: int = DEFAULT_LEVELS,
    sigma: float = DEFAULT_SIGMA,
) -> list[ErrorRecord]:
    """Localize every query and score it; failed solves become misses."""

    def one(j: int) -> ErrorRecord:
        try:
            res = localize(images[j], db, map_, K, cfg, db_images=db_images, levels=levels, sigma=sigma)
        except CloudVisionError:
            return ErrorRecord(j, math.inf, math.inf, False)
        te, re = pose_error(res.pose, gt_poses[j].pose)
        return ErrorRecord(j, te, re, res.converged)

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        return list(pool.map(one, range(len(images))))


def run_ablation(
    variant: str,
    dataset,
    cfg: SolverConfig = SolverConfig(),
    *,
    voxel_size: float = DEFAULT_VOXEL,
    levels: int = DEFAULT_LEVELS,
    sigma: float = DEFAULT_SIGMA,
    kind: str = "tiny",
    thresholds=(HEADLINE,),
    map_: IndexedMap | None = None,
) -> AblationResult:
    """Localize the dataset's queries against one map variant.

    ``dataset`` needs ``scans``, ``lidar_traj``, ``db_poses``, ``db_images``,
    ``query_poses``, ``query_images``, ``K`` and ``extrinsic``.  A prebuilt
    indexed map may be passed in to skip rebuilding it.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant == "indexed_map":
        if map_ is None:
            map_ = build_indexed_map(
                dataset.scans, dataset.lidar_traj, dataset.db_poses, dataset.K, dataset.extrinsic, voxel_size
            )
    else:
        map_ = raw_scan_map(dataset.scans, dataset.lidar_traj, dataset.db_poses, dataset.K)
    db = RetrievalDatabase.build(dataset.db_images, dataset.db_poses, kind)
    records = evaluate_queries(
        dataset.query_images, dataset.query_poses, db, map_, dataset.K, dataset.db_images, cfg, levels, sigma
    )
    source = sum(s.points.shape[0] for s in dataset.scans)
    return AblationResult(variant, compute_report(records, thresholds), records, len(map_), source)


# --- plotting ----------------------------------------------------------------

_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2")


def render_curve_svg(curve, width: int = 480, height: int = 320) -> str:
    """Recall versus translation threshold, one polyline per rotation threshold."""
    ml, mr, mt, mb = 50, 110, 20, 40
    pw, ph = width - ml - mr, height - mt - mb
    trans = sorted({t for (t, _), _ in curve})
    rots = sorted({r for (_, r), _ in curve})
    lookup = {k: v for k, v in curve}
    # Evenly spaced x positions: thresholds are roughly geometric.
    xs = {t: ml + (pw * i / max(len(trans) - 1, 1)) for i, t in enumerate(trans)}

    def y(p: float) -> float:
        return mt + ph * (1.0 - p / 100.0)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for p in (0, 25, 50, 75, 100):
        out.append(f'<text x="{ml - 6}" y="{y(p) + 4:.1f}" text-anchor="end">{p}</text>')
    for t in trans:
        out.append(f'<text x="{xs[t]:.1f}" y="{mt + ph + 16}" text-anchor="middle">{t * 100:g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 6}" text-anchor="middle">translation threshold (cm)</text>')
    out.append(f'<text x="14" y="{mt + ph / 2:.1f}" transform="rotate(-90 14 {mt + ph / 2:.1f})" '
               'text-anchor="middle">recall (%)</text>')
    for i, r in enumerate(rots):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{xs[t]:.1f},{y(lookup[(t, r)]):.1f}" for t in trans if (t, r) in lookup)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 14 * (i + 1)
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 28}" y2="{ly - 4}" stroke="{color}"/>')
        out.append(f'<text x="{ml + pw + 32}" y="{ly}">{r:g} deg</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
