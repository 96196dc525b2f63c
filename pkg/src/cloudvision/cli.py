"""``cloudvision`` command line.

Exit status: 0 on success, 1 on a usage error, 2 on a data error (missing
or malformed input files, failed map/database construction).  Every command
reads and validates all of its inputs before it writes anything.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import CloudVisionError
from .evaluation import (
    HEADLINE,
    VARIANTS,
    compute_report,
    finite_json,
    records_from_trajectories,
    run_ablation,
    thread_count,
)
from .features import DEFAULT_LEVELS, DEFAULT_SIGMA
from .formats import (
    TimedPose,
    format_tum_line,
    read_pgm,
    read_scan_dir,
    read_tum,
    write_pgm,
    write_scan,
    write_tum,
)
from .geometry import Pose, load_intrinsics, save_intrinsics
from .mapcloud import DEFAULT_VOXEL, build_indexed_map, load_map, save_map
from .retrieval import KIND_TAGS, RetrievalDatabase, load_database, save_database
from .solver import SolverConfig, localize
from .synth import SceneSpec, TrajectorySpec, generate_dataset

log = logging.getLogger("cloudvision")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; this tool reserves 2 for data errors.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- small file helpers ------------------------------------------------------


def image_name(timestamp: float) -> str:
    # Fixed width keeps lexical order equal to time order.
    return f"{timestamp:017.6f}.pgm"


def image_timestamp(path: Path, fallback: int) -> float:
    try:
        return float(path.stem)
    except ValueError:
        return float(fallback)


def list_images(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d}: not a directory")
    files = sorted(d.glob("*.pgm"))
    if not files:
        raise CloudVisionError(f"{d}: no .pgm images")
    return files


def write_extrinsic(pose: Pose, path) -> None:
    Path(path).write_text("# camera-from-lidar: tx ty tz qx qy qz qw\n" + " ".join(repr(float(v)) for v in pose.to_tum()) + "\n")


def read_extrinsic(path) -> Pose:
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            vals = line.split()
            if len(vals) != 7:
                raise ValueError(f"{path}: expected 7 values, got {len(vals)}")
            return Pose.from_tum([float(v) for v in vals])
    raise ValueError(f"{path}: no extrinsic found")


def parse_thresholds(text: str | None):
    """``"0.05:2,0.1:5"`` -> ``[(0.05, 2.0), (0.1, 5.0)]`` (metres, degrees)."""
    if not text:
        return [HEADLINE]
    out = []
    for item in text.split(","):
        try:
            t, r = item.split(":")
            pair = (float(t), float(r))
        except ValueError:
            raise UsageError(f"bad threshold {item!r}; expected METRES:DEGREES") from None
        if not (pair[0] >= 0 and pair[1] >= 0):
            raise UsageError(f"thresholds must be non-negative: {item!r}")
        out.append(pair)
    return out


def solver_config(args) -> SolverConfig:
    try:
        return SolverConfig(huber_delta=args.huber)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write_text(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


# --- commands ----------------------------------------------------------------


def cmd_synth_gen(args) -> int:
    if args.loop_length <= 0 or args.db_images < 1 or args.queries < 0:
        raise UsageError("loop length, database size and query count must be positive")
    scene_spec = SceneSpec(loop_length=args.loop_length)
    traj_spec = TrajectorySpec(loop_length=args.loop_length, n_db=args.db_images, n_queries=args.queries)
    ds = generate_dataset(scene_spec, traj_spec, seed=args.seed, scan_noise=args.scan_noise)
    out = Path(args.out)
    for sub in ("scans", "images_db", "images_query"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    meta = {
        "seed": args.seed,
        "scene": asdict(scene_spec),
        "trajectory": traj_spec.to_dict(),
        "scan_noise": args.scan_noise,
    }
    _write_text(out / "scene.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for i, scan in enumerate(ds.scans):
        write_scan(out / "scans" / f"{i:06d}.cvsc", scan)
    for tp, img in zip(ds.db_poses, ds.db_images):
        write_pgm(out / "images_db" / image_name(tp.timestamp), img)
    for tp, img in zip(ds.query_poses, ds.query_images):
        write_pgm(out / "images_query" / image_name(tp.timestamp), img)
    write_tum(out / "traj_lidar.tum", ds.lidar_traj)
    write_tum(out / "traj_db.tum", ds.db_poses)
    write_tum(out / "traj_query_gt.tum", ds.query_poses)
    save_intrinsics(ds.K, out / "cam.txt")
    write_extrinsic(ds.extrinsic, out / "extrinsic.txt")
    log.info("wrote %d scans, %d database and %d query images to %s", len(ds.scans), len(ds.db_images), len(ds.query_images), out)
    return EXIT_OK


def cmd_map_build(args) -> int:
    if args.voxel <= 0:
        raise UsageError("--voxel must be positive")
    scans = read_scan_dir(args.scans)
    traj = read_tum(args.traj)
    db_poses = read_tum(args.db_poses)
    K = load_intrinsics(args.cam)
    extrinsic = read_extrinsic(args.extrinsic)
    m = build_indexed_map(scans, traj, db_poses, K, extrinsic, args.voxel, zbuffer=args.zbuffer)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_map(m, args.out)
    log.info("map: %d points for %d images", len(m), m.image_count)
    return EXIT_OK


def cmd_db_build(args) -> int:
    files = list_images(args.images)
    poses = read_tum(args.poses)
    if len(files) != len(poses):
        raise CloudVisionError(f"{len(files)} images but {len(poses)} poses")
    images = [read_pgm(f) for f in files]
    db = RetrievalDatabase.build(images, poses, args.kind)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_database(db, args.out)
    return EXIT_OK


@dataclass
class _Query:
    path: Path
    timestamp: float
    image: np.ndarray


def cmd_localize(args) -> int:
    if args.levels < 1 or args.top_k < 1:
        raise UsageError("--levels and --top-k must be >= 1")
    if (args.query is None) == (args.batch is None):
        raise UsageError("give exactly one of --query or --batch")
    cfg = solver_config(args)
    m = load_map(args.map)
    db = load_database(args.db)
    K = load_intrinsics(args.cam)
    db_files = list_images(args.db_images)
    if len(db_files) != len(db):
        raise CloudVisionError(f"{len(db_files)} database images but the database holds {len(db)}")
    if m.image_count != len(db):
        raise CloudVisionError(f"map indexes {m.image_count} images but the database holds {len(db)}")
    db_images = [read_pgm(f) for f in db_files]
    files = [Path(args.query)] if args.query else list_images(args.batch)
    queries = [_Query(f, image_timestamp(f, i), read_pgm(f)) for i, f in enumerate(files)]

    def one(q: _Query):
        try:
            res = localize(
                q.image, db, m, K, cfg, db_images=db_images, levels=args.levels, sigma=args.sigma, top_k=args.top_k
            )
        except CloudVisionError as exc:
            return None, {"query": q.path.name, "timestamp": q.timestamp, "error": f"{type(exc).__name__}: {exc}"}
        diag = {"query": q.path.name, "timestamp": q.timestamp}
        diag.update(res.diagnostics())
        diag["candidates"] = [[i, s] for i, s in res.candidates]
        return TimedPose(q.timestamp, res.pose), diag

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        results = list(pool.map(one, queries))

    tum = "".join(format_tum_line(tp) + "\n" for tp, _ in results if tp is not None)
    diags = "".join(json.dumps(finite_json(d), sort_keys=True) + "\n" for _, d in results)
    if args.out:
        _write_text(args.out, tum)
    else:
        sys.stdout.write(tum)
    if args.diagnostics:
        _write_text(args.diagnostics, diags)
    failed = sum(tp is None for tp, _ in results)
    if failed:
        log.warning("%d of %d queries failed", failed, len(results))
    return EXIT_OK


def _write_report(report, out: Path, extra: dict | None = None) -> None:
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    _write_text(out / "report.json", json.dumps(finite_json(payload), indent=2, sort_keys=True) + "\n")
    _write_text(out / "curve.csv", report.curve_csv())
    _write_text(out / "curve.svg", report.curve_svg())


def cmd_evaluate(args) -> int:
    thresholds = parse_thresholds(args.thresholds)
    est = read_tum(args.est)
    gt = read_tum(args.gt)
    converged = None
    if args.diagnostics:
        converged = {}
        for line in Path(args.diagnostics).read_text().splitlines():
            if line.strip():
                d = json.loads(line)
                converged[float(d["timestamp"])] = bool(d.get("converged", False))
    records = records_from_trajectories(est, gt, converged)
    report = compute_report(records, thresholds)
    _write_report(report, Path(args.out))
    r = report.recall_at[thresholds[0]]
    print(f"median {report.median_trans * 100:.2f} cm / {report.median_rot:.3f} deg, "
          f"recall@({thresholds[0][0] * 100:g} cm, {thresholds[0][1]:g} deg) {r:.1f}%")
    return EXIT_OK


@dataclass
class DiskDataset:
    K: object
    extrinsic: Pose
    scans: list
    lidar_traj: list
    db_poses: list
    db_images: list
    query_poses: list
    query_images: list


def load_disk_dataset(root) -> DiskDataset:
    root = Path(root)
    db_files = list_images(root / "images_db")
    q_files = list_images(root / "images_query")
    db_poses = read_tum(root / "traj_db.tum")
    q_poses = read_tum(root / "traj_query_gt.tum")
    if len(db_files) != len(db_poses) or len(q_files) != len(q_poses):
        raise CloudVisionError(f"{root}: image and pose counts differ")
    return DiskDataset(
        load_intrinsics(root / "cam.txt"),
        read_extrinsic(root / "extrinsic.txt"),
        read_scan_dir(root / "scans"),
        read_tum(root / "traj_lidar.tum"),
        db_poses,
        [read_pgm(f) for f in db_files],
        q_poses,
        [read_pgm(f) for f in q_files],
    )


def cmd_ablate(args) -> int:
    thresholds = parse_thresholds(args.thresholds)
    if args.levels < 1 or args.voxel <= 0:
        raise UsageError("--levels must be >= 1 and --voxel positive")
    cfg = solver_config(args)
    ds = load_disk_dataset(args.data)
    variants = VARIANTS if args.variant == "both" else (args.variant,)
    results = [
        run_ablation(v, ds, cfg, voxel_size=args.voxel, levels=args.levels, thresholds=thresholds) for v in variants
    ]
    out = Path(args.out)
    payload = {"thresholds": [list(t) for t in thresholds], "variants": [r.to_dict() for r in results]}
    _write_text(out / "ablation.json", json.dumps(finite_json(payload), indent=2, sort_keys=True) + "\n")
    for r in results:
        rec = r.report.recall_at[thresholds[0]]
        print(f"{r.variant:12s} points {r.map_points:>10d}  median {r.report.median_trans * 100:.2f} cm "
              f"/ {r.report.median_rot:.3f} deg  recall {rec:.1f}%")
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def _add_solver_flags(p) -> None:
    p.add_argument("--levels", type=int, default=DEFAULT_LEVELS, help="pyramid levels (default %(default)s)")
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="pyramid blur in pixels")
    p.add_argument("--huber", type=float, default=SolverConfig.huber_delta, help="Huber threshold, feature units")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cloudvision", description="Camera localization in a LiDAR map.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    synth = sub.add_parser("synth", help="synthetic data").add_subparsers(dest="action", parser_class=_Parser, required=True)
    gen = synth.add_parser("gen", help="generate a synthetic dataset directory")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--loop-length", type=float, default=TrajectorySpec.loop_length)
    gen.add_argument("--db-images", type=int, default=TrajectorySpec.n_db)
    gen.add_argument("--queries", type=int, default=TrajectorySpec.n_queries)
    gen.add_argument("--scan-noise", type=float, default=0.0, help="range noise sigma in metres")
    gen.set_defaults(func=cmd_synth_gen)

    mp = sub.add_parser("map", help="LiDAR map").add_subparsers(dest="action", parser_class=_Parser, required=True)
    build = mp.add_parser("build", help="build the co-visibility indexed map")
    build.add_argument("--scans", required=True, help="directory of .cvsc scans")
    build.add_argument("--traj", required=True, help="LiDAR trajectory (TUM)")
    build.add_argument("--db-poses", required=True, help="database camera poses (TUM)")
    build.add_argument("--cam", required=True, help="intrinsics file")
    build.add_argument("--extrinsic", required=True, help="camera-from-LiDAR pose file")
    build.add_argument("--voxel", type=float, default=DEFAULT_VOXEL)
    build.add_argument("--zbuffer", action="store_true", help="also drop points hidden behind nearer map points")
    build.add_argument("--out", required=True)
    build.set_defaults(func=cmd_map_build)

    dbp = sub.add_parser("db", help="retrieval database").add_subparsers(dest="action", parser_class=_Parser, required=True)
    dbb = dbp.add_parser("build", help="compute global descriptors of the database images")
    dbb.add_argument("--images", required=True, help="directory of database .pgm images")
    dbb.add_argument("--poses", required=True, help="database camera poses (TUM), in image order")
    dbb.add_argument("--kind", choices=sorted(KIND_TAGS), default="tiny")
    dbb.add_argument("--out", required=True)
    dbb.set_defaults(func=cmd_db_build)

    loc = sub.add_parser("localize", help="localize one query image or a directory of them")
    loc.add_argument("--map", required=True)
    loc.add_argument("--db", required=True)
    loc.add_argument("--db-images", required=True)
    loc.add_argument("--cam", required=True)
    loc.add_argument("--query", help="single query image")
    loc.add_argument("--batch", help="directory of query images, processed in filename order")
    loc.add_argument("--top-k", type=int, default=1, help="ranking depth kept in diagnostics")
    loc.add_argument("--out", help="TUM output (default: stdout)")
    loc.add_argument("--diagnostics", help="JSON-lines diagnostics output")
    _add_solver_flags(loc)
    loc.set_defaults(func=cmd_localize)

    ev = sub.add_parser("evaluate", help="score estimated poses against ground truth")
    ev.add_argument("--est", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--diagnostics", help="localize diagnostics; non-converged queries count as misses")
    ev.add_argument("--thresholds", help="comma-separated METRES:DEGREES pairs (default 0.05:2)")
    ev.add_argument("--out", required=True, help="report directory")
    ev.set_defaults(func=cmd_evaluate)

    ab = sub.add_parser("ablate", help="compare the indexed map with raw scans")
    ab.add_argument("--data", required=True, help="directory written by 'synth gen'")
    ab.add_argument("--variant", choices=(*VARIANTS, "both"), default="both")
    ab.add_argument("--voxel", type=float, default=DEFAULT_VOXEL)
    ab.add_argument("--thresholds")
    ab.add_argument("--out", required=True)
    _add_solver_flags(ab)
    ab.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cloudvision: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CloudVisionError, OSError, ValueError, KeyError) as exc:
        print(f"cloudvision: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
