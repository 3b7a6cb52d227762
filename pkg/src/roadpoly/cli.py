"""Command-line surface tying the pipeline together.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import formats
from .errors import DataError, InvalidInputError, NumericalError, RoadPolyError
from .evaluation import control_mae, direction_accuracy, pose_metrics
from .geo import PlanarPoint
from .roadmap import (
    DEFAULT_DELTA_M,
    RoadMap,
    SegmentId,
    adjacency_gaps,
    bucket_samples,
    fit_segments,
    project_point,
    project_points,
    rasterize_crop,
    refit_with_neighbors,
)
from .routing import Route, simulate_coverage
from .synth import generate_synthetic, parse_synth_spec
from .trajectory import (
    SMOOTH_DEGREE,
    SMOOTH_WINDOW_S,
    Pose,
    ground_truth_sample,
    smooth_poses,
)


def _trace_files(directory: str | Path) -> list[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"trace directory not found: {root}")
    files = sorted(p for p in root.iterdir() if p.is_file() and p.suffix == ".txt")
    if not files:
        raise DataError(f"no .txt trace files in {root}")
    return files


def _load_traces(directory: str | Path, origin) -> list[formats.TraceData]:
    traces = []
    for path in _trace_files(directory):
        trace = formats.parse_trace(path)
        if abs(trace.origin.lat - origin.lat) > 1e-9 or abs(trace.origin.lon - origin.lon) > 1e-9:
            raise DataError(
                f"{path}: trace origin {trace.origin} differs from topology origin {origin}"
            )
        traces.append(trace)
    return traces


def cmd_build_map(args) -> int:
    topology, origin = formats.parse_topology(args.topology)
    traces = _load_traces(args.traces, origin)
    buckets = bucket_samples([(t.route, list(t.samples)) for t in traces], topology)
    segments = fit_segments(buckets, topology)
    road = refit_with_neighbors(segments, topology, args.delta, origin)
    formats.write_map(args.out, road)
    gaps = [g for _, _, g in adjacency_gaps(road)]
    note = f", worst adjacency gap {max(gaps):.3f} m" if gaps else ""
    print(f"map written to {args.out}: {len(road.segments)} segments{note}")
    return 0


def cmd_project(args) -> int:
    road = formats.parse_map(args.map)
    poses = formats.parse_poses(args.poses)
    projected: list[Pose | None] = []
    for pose in poses:
        if pose is None:
            projected.append(None)
            continue
        hit = project_point(road, pose.p)
        projected.append(Pose(pose.t, hit.q, pose.heading))
    present = [p for p in projected if p is not None]
    smoothed = iter(smooth_poses(present, window=args.smooth_window, degree=args.smooth_degree))
    out = [next(smoothed) if p is not None else None for p in projected]
    formats.write_poses(args.out, out)
    print(f"projected {len(present)}/{len(poses)} poses onto {len(road.segments)} segments")
    return 0


def _topology_lengths(topology) -> dict[str, float]:
    """Straight-line center distances; used before any map exists."""
    out = {}
    for e in topology.edges:
        a = topology.node_by_id[e.from_node].center
        b = topology.node_by_id[e.to_node].center
        out[e.id] = a.distance_to(b)
    return out


def cmd_simulate_routes(args) -> int:
    topology, _ = formats.parse_topology(args.topology)
    lengths = _topology_lengths(topology)
    plan = simulate_coverage(
        topology,
        lengths,
        seed=args.seed,
        km_limit=args.km_limit * 1000.0,
        n_runs=args.runs,
        min_crossings=args.min_crossings,
    )
    under = sum(
        1
        for e1 in topology.edges
        for e2 in topology.out_edges[e1.to_node]
        if plan.pair_edge_counts.get((e1.id, e2.id), 0) < args.min_crossings
    )
    formats.write_plan(
        args.out,
        plan,
        meta={
            "seed": args.seed,
            "km-limit": formats.fmt(args.km_limit * 1000.0),
            "runs": args.runs,
            "min-crossings": args.min_crossings,
            "undercrossed-pairs": under,
        },
    )
    print(
        f"plan written to {args.out}: {len(plan.legs)} legs, "
        f"{plan.total_length / 1000.0:.1f} km, {under} pair edges under {args.min_crossings}"
    )
    return 0


def _route_segments(road: RoadMap, node_ids) -> list[SegmentId]:
    edges = [e.id for e in road.topology.route_edges(node_ids)]
    out = [SegmentId.for_edge(e) for e in edges]
    out += [SegmentId.for_turn(a, b) for a, b in zip(edges, edges[1:])]
    return out


def cmd_crop(args) -> int:
    road = formats.parse_map(args.map)
    try:
        x, y = (float(v) for v in args.center.split(","))
    except ValueError:
        raise InvalidInputError(f"bad --center {args.center!r}, expected X,Y")
    center = PlanarPoint(x, y)
    outs = [Path(p) for p in args.out.split(",")]
    full = rasterize_crop(road, center, args.heading, None, args.size)
    formats.write_pgm(outs[0], full)
    written = [str(outs[0])]
    if args.route is not None:
        if len(outs) < 2:
            raise InvalidInputError("--route given but --out names only one file")
        segs: list[SegmentId] = []
        for _no, fields in formats._rows(args.route):
            if fields[0] == "leg":
                segs.extend(_route_segments(road, fields[1:]))
            elif fields[0] == "route":
                ids = fields[1:]
                if ids and ids[0] not in road.topology.node_by_id:
                    ids = ids[1:]  # leading field is a trace id
                segs.extend(_route_segments(road, ids))
        route_img = rasterize_crop(road, center, args.heading, segs, args.size)
        formats.write_pgm(outs[1], route_img)
        written.append(str(outs[1]))
    print("wrote " + ", ".join(written))
    return 0


def cmd_ground_truth(args) -> int:
    samples: list[formats.TrajectorySample] = []
    routes: dict[str, tuple[str, ...]] = {}
    for path in _trace_files(args.traces):
        trace = formats.parse_trace(path)
        trace_id = path.stem
        routes[trace_id] = trace.route
        ts = [s.t for s in trace.samples]
        if not ts:
            continue
        t0 = math.ceil(ts[0] + args.window / 2.0)
        limit = ts[-1] - 7.0 - args.window / 2.0
        while t0 <= limit:
            try:
                pose, traj = ground_truth_sample(list(trace.samples), float(t0), args.window)
                samples.append(formats.TrajectorySample(trace_id, pose, traj))
            except DataError:
                pass  # sparse window or standstill: skip this instant
            t0 += args.stride
    if not samples:
        raise DataError("no extractable trajectory samples in the given traces")
    formats.write_samples(args.out, samples, routes)
    print(f"wrote {len(samples)} trajectory samples from {len(routes)} traces to {args.out}")
    return 0


def cmd_evaluate_poses(args) -> int:
    preds = formats.parse_poses(args.pred)
    truths_raw = formats.parse_poses(args.truth)
    if any(t is None for t in truths_raw):
        raise DataError("truth poses must all be present")
    truths = [t for t in truths_raw if t is not None]
    position, orientation = pose_metrics(preds, truths)
    formats.write_atomic(args.out, formats.serialize_pose_report(position, orientation))
    print(
        f"position: response {position.response_rate * 100:.2f}% "
        f"mean {position.mean_err:.2f} median {position.median_err:.2f} | "
        f"orientation: response {orientation.response_rate * 100:.2f}% "
        f"mean {orientation.mean_err:.2f} median {orientation.median_err:.2f}"
    )
    return 0


def cmd_evaluate_controls(args) -> int:
    preds = formats.parse_controls(args.pred)
    truths = formats.parse_controls(args.truth)
    table = control_mae(preds, truths)
    formats.write_atomic(args.out, formats.serialize_controls_report(table))
    print(
        "speed MAE  " + " ".join(f"{v:.3f}" for v in table.speed)
        + " | angle MAE " + " ".join(f"{v:.3f}" for v in table.angle)
    )
    return 0


def cmd_evaluate_direction(args) -> int:
    road = formats.parse_map(args.map)
    samples, routes = formats.parse_samples(args.samples)
    lengths = {
        sid.first: seg.length
        for sid, seg in road.segments.items()
        if sid.kind == "edge"
    }
    route_objs: dict[str, Route] = {}
    for trace_id, node_ids in routes.items():
        edges = tuple(e.id for e in road.topology.route_edges(node_ids))
        route_objs[trace_id] = Route(
            tuple(node_ids), edges, sum(lengths[e] for e in edges)
        )
    missing = sorted({s.trace_id for s in samples} - set(route_objs))
    if missing:
        raise DataError(f"samples reference traces without route lines: {missing}")
    preds = [(s.pose, s.trajectory) for s in samples]
    truth_routes = [route_objs[s.trace_id] for s in samples]
    report = direction_accuracy(preds, truth_routes, road)
    formats.write_atomic(args.out, formats.serialize_direction_report(report))
    cells = " ".join(
        f"{a * 100:.1f}%" if a is not None else "-" for a in report.per_second_accuracy
    )
    print(f"direction accuracy per second: {cells} (counted {sum(report.counted)})")
    return 0


def cmd_evaluate_map_fidelity(args) -> int:
    built = formats.parse_map(args.map)
    truth = formats.parse_map(args.truth_map)
    pts = np.vstack([seg.polyline for seg in built.segments.values()])
    _, _, _, dist = project_points(truth, pts)
    gaps = [g for _, _, g in adjacency_gaps(built)]
    values = {
        "polyline_points": int(pts.shape[0]),
        "mean_dist": float(dist.mean()),
        "max_dist": float(dist.max()),
        "p99_dist": float(np.percentile(dist, 99)),
        "max_adjacency_gap": max(gaps) if gaps else None,
        "mean_adjacency_gap": float(np.mean(gaps)) if gaps else None,
    }
    formats.write_atomic(args.out, formats.serialize_kv_report("map fidelity report", values))
    print(
        f"fidelity vs truth: mean {values['mean_dist']:.3f} m, max {values['max_dist']:.3f} m; "
        f"worst adjacency gap {values['max_adjacency_gap']:.3f} m"
    )
    return 0


def cmd_synth(args) -> int:
    if args.spec == "demo":
        with resources.as_file(
            resources.files("roadpoly").joinpath("data/demo_world.txt")
        ) as demo:
            spec = parse_synth_spec(demo)
    else:
        spec = parse_synth_spec(args.spec)
    world = generate_synthetic(spec, out_dir=args.out, max_traces=args.max_traces)
    print(
        f"synthetic world in {args.out}: {len(world.traces)} traces, "
        f"{sum(len(t.samples) for t in world.traces)} samples, "
        f"{len(world.truth_map.segments)} truth segments"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadpoly",
        description="Analytical polynomial road maps from GPS traces: "
        "build, query, simulate, and evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-map", help="fit the analytical map from traces")
    p.add_argument("--topology", required=True, help="topology document")
    p.add_argument("--traces", required=True, help="directory of trace files")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA_M,
                   help="neighbor window for the continuity refit (m)")
    p.add_argument("--out", required=True, help="output map document")
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("project", help="project poses onto the map and smooth them")
    p.add_argument("--map", required=True)
    p.add_argument("--poses", required=True, help="poses document")
    p.add_argument("--smooth-window", type=float, default=SMOOTH_WINDOW_S)
    p.add_argument("--smooth-degree", type=int, default=SMOOTH_DEGREE)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("simulate-routes", help="coverage-maximizing route plan")
    p.add_argument("--topology", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--km-limit", type=float, default=350.0, help="distance budget in km")
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--min-crossings", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate_routes)

    p = sub.add_parser("crop", help="rasterize binary road-map crops")
    p.add_argument("--map", required=True)
    p.add_argument("--center", required=True, help="X,Y planar meters")
    p.add_argument("--heading", type=float, required=True, help="radians, CCW from east")
    p.add_argument("--route", help="route document for the route-only crop")
    p.add_argument("--size", type=int, default=128, help="size in pixels (1 m/px)")
    p.add_argument("--out", required=True, help="PGM path, or two comma-separated paths")
    p.set_defaults(func=cmd_crop)

    p = sub.add_parser("ground-truth", help="extract pose + trajectory labels from traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--stride", type=float, default=1.0, help="seconds between labels")
    p.add_argument("--window", type=float, default=2.0, help="extra fit window (s)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ground_truth)

    p = sub.add_parser("evaluate", help="metric reports")
    esub = p.add_subparsers(dest="what", required=True)

    e = esub.add_parser("poses", help="response rates and pose errors")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate_poses)

    e = esub.add_parser("controls", help="per-second speed and steering MAE")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate_controls)

    e = esub.add_parser("direction", help="intersection direction accuracy")
    e.add_argument("--map", required=True)
    e.add_argument("--samples", required=True, help="trajectory samples document")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate_direction)

    e = esub.add_parser("map-fidelity", help="built map vs truth map distances")
    e.add_argument("--map", required=True, help="built map")
    e.add_argument("--truth-map", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate_map_fidelity)

    p = sub.add_parser("synth", help="generate a synthetic world")
    p.add_argument("--spec", required=True, help="world spec document, or 'demo'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--max-traces", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except (RoadPolyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
