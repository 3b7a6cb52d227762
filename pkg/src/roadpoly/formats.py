"""Text formats for every pipeline artifact, plus PGM image export.

All formats are line-oriented with comma-separated fields; lines starting
with ``#`` are comments (trace files use two special ``#`` header
directives). Floats are printed with 9 significant digits, except map
curve coefficients and lengths, which are printed exactly (17 digits) so
a reloaded map regenerates bit-identical polylines. Writes go through a
temp file and an atomic rename so partial runs never corrupt artifacts.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ParseError
from .evaluation import ControlMaeTable, DirectionReport, PoseMetrics
from .geo import GeoPoint, PlanarPoint, TimedSample, to_geodetic, to_planar
from .polyfit import Curve2D
from .roadmap import Edge, GraphTopology, MapSegment, Node, RoadMap, SegmentId
from .routing import Route, RoutePlan
from .trajectory import TRAJECTORY_POINTS, ControlCommand, Pose, Trajectory


def fmt(v: float) -> str:
    return format(float(v), ".9g")


def fmt_exact(v: float) -> str:
    return format(float(v), ".17g")


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_atomic_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_lines(path: str | Path) -> list[tuple[int, str]]:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ParseError("file not found", path=str(path))
    return [(i + 1, line.strip()) for i, line in enumerate(text.splitlines())]


def _rows(path: str | Path, keep_headers: bool = False) -> list[tuple[int, list[str]]]:
    out = []
    for no, line in _read_lines(path):
        if not line:
            continue
        if line.startswith("#"):
            if keep_headers and line[1:].lstrip().split(",")[0] in ("origin", "route"):
                out.append((no, [f.strip() for f in line[1:].lstrip().split(",")]))
            continue
        out.append((no, [f.strip() for f in line.split(",")]))
    return out


def _float(value: str, path, no, what: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"bad {what}: {value!r}", path=str(path), line=no)


def _int(value: str, path, no, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"bad {what}: {value!r}", path=str(path), line=no)


# --- traces ---------------------------------------------------------------


@dataclass(frozen=True)
class TraceData:
    """A parsed trace: header plus raw rows and derived planar samples."""

    origin: GeoPoint
    route: tuple[str, ...]
    rows: tuple[tuple[int, float, float], ...]  # (ms, lat, lon)
    samples: tuple[TimedSample, ...]


def parse_trace(path: str | Path) -> TraceData:
    origin: Optional[GeoPoint] = None
    route: Optional[tuple[str, ...]] = None
    rows: list[tuple[int, float, float]] = []
    last_ms: Optional[int] = None
    for no, fields in _rows(path, keep_headers=True):
        tag = fields[0]
        if tag == "origin":
            if len(fields) != 3:
                raise ParseError("origin needs lat,lon", path=str(path), line=no)
            origin = GeoPoint(
                _float(fields[1], path, no, "latitude"),
                _float(fields[2], path, no, "longitude"),
            )
        elif tag == "route":
            route = tuple(fields[1:])
        else:
            if len(fields) != 3:
                raise ParseError(f"expected ms,lat,lon row, got {len(fields)} fields",
                                 path=str(path), line=no)
            ms = _int(fields[0], path, no, "timestamp")
            if last_ms is not None and ms <= last_ms:
                raise ParseError(
                    f"timestamp {ms} not increasing (previous {last_ms})",
                    path=str(path), line=no,
                )
            last_ms = ms
            rows.append((
                ms,
                _float(fields[1], path, no, "latitude"),
                _float(fields[2], path, no, "longitude"),
            ))
    if origin is None:
        raise ParseError("missing '# origin' header", path=str(path))
    if route is None or len(route) < 2:
        raise ParseError("missing or too-short '# route' header", path=str(path))
    t0 = rows[0][0] if rows else 0
    samples = tuple(
        TimedSample((ms - t0) / 1000.0, to_planar(GeoPoint(lat, lon), origin))
        for ms, lat, lon in rows
    )
    return TraceData(origin, route, tuple(rows), samples)


def serialize_trace(trace: TraceData) -> str:
    lines = [
        f"# origin,{fmt(trace.origin.lat)},{fmt(trace.origin.lon)}",
        "# route," + ",".join(trace.route),
    ]
    lines += [f"{ms},{fmt(lat)},{fmt(lon)}" for ms, lat, lon in trace.rows]
    return "\n".join(lines) + "\n"


def write_trace(path: str | Path, trace: TraceData) -> None:
    write_atomic(path, serialize_trace(trace))


# --- topology ---------------------------------------------------------------


def parse_topology(path: str | Path) -> tuple[GraphTopology, GeoPoint]:
    """Read a topology document; node centers become planar around the origin.

    An explicit ``origin`` line anchors the frame; without one the
    centroid of the node coordinates is used.
    """
    origin: Optional[GeoPoint] = None
    raw_nodes: list[tuple[str, float, float, float]] = []
    edges: list[Edge] = []
    for no, fields in _rows(path):
        tag = fields[0]
        if tag == "origin" and len(fields) == 3:
            origin = GeoPoint(
                _float(fields[1], path, no, "latitude"),
                _float(fields[2], path, no, "longitude"),
            )
        elif tag == "node":
            if len(fields) != 5:
                raise ParseError("node needs id,lat,lon,radius", path=str(path), line=no)
            raw_nodes.append((
                fields[1],
                _float(fields[2], path, no, "latitude"),
                _float(fields[3], path, no, "longitude"),
                _float(fields[4], path, no, "radius"),
            ))
        elif tag == "edge":
            if len(fields) != 4:
                raise ParseError("edge needs id,from,to", path=str(path), line=no)
            edges.append(Edge(fields[1], fields[2], fields[3]))
        else:
            raise ParseError(f"unknown record {tag!r}", path=str(path), line=no)
    if not raw_nodes:
        raise ParseError("topology has no nodes", path=str(path))
    if origin is None:
        origin = GeoPoint(
            sum(n[1] for n in raw_nodes) / len(raw_nodes),
            sum(n[2] for n in raw_nodes) / len(raw_nodes),
        )
    nodes = [
        Node(nid, to_planar(GeoPoint(lat, lon), origin), radius)
        for nid, lat, lon, radius in raw_nodes
    ]
    return GraphTopology(nodes, edges), origin


def _topology_lines(topology: GraphTopology, origin: GeoPoint) -> list[str]:
    lines = [f"origin,{fmt(origin.lat)},{fmt(origin.lon)}"]
    for n in topology.nodes:
        g = to_geodetic(n.center, origin)
        lines.append(f"node,{n.id},{fmt(g.lat)},{fmt(g.lon)},{fmt(n.radius)}")
    lines += [f"edge,{e.id},{e.from_node},{e.to_node}" for e in topology.edges]
    return lines


def serialize_topology(topology: GraphTopology, origin: GeoPoint) -> str:
    return "\n".join(["# road topology"] + _topology_lines(topology, origin)) + "\n"


def write_topology(path: str | Path, topology: GraphTopology, origin: GeoPoint) -> None:
    write_atomic(path, serialize_topology(topology, origin))


# --- road map ---------------------------------------------------------------


def serialize_map(road_map: RoadMap) -> str:
    lines = ["# roadpoly map"] + _topology_lines(road_map.topology, road_map.origin)
    for sid in sorted(road_map.segments, key=lambda s: s.sort_key):
        seg = road_map.segments[sid]
        ids = [sid.first] if sid.kind == "edge" else [sid.first, sid.second]
        coeffs = [fmt_exact(c) for c in seg.curve.coeffs_x + seg.curve.coeffs_y]
        lines.append(
            ",".join(
                ["segment", sid.kind] + ids
                + [str(seg.curve.degree), fmt_exact(seg.length)] + coeffs
            )
        )
    return "\n".join(lines) + "\n"


def write_map(path: str | Path, road_map: RoadMap) -> None:
    write_atomic(path, serialize_map(road_map))


def parse_map(path: str | Path) -> RoadMap:
    origin: Optional[GeoPoint] = None
    raw_nodes: list[tuple[str, float, float, float]] = []
    edges: list[Edge] = []
    segments: dict[SegmentId, MapSegment] = {}
    raw_segments: list[tuple[int, list[str]]] = []
    for no, fields in _rows(path):
        tag = fields[0]
        if tag == "origin":
            origin = GeoPoint(
                _float(fields[1], path, no, "latitude"),
                _float(fields[2], path, no, "longitude"),
            )
        elif tag == "node":
            raw_nodes.append((
                fields[1],
                _float(fields[2], path, no, "latitude"),
                _float(fields[3], path, no, "longitude"),
                _float(fields[4], path, no, "radius"),
            ))
        elif tag == "edge":
            edges.append(Edge(fields[1], fields[2], fields[3]))
        elif tag == "segment":
            raw_segments.append((no, fields))
        else:
            raise ParseError(f"unknown record {tag!r}", path=str(path), line=no)
    if origin is None:
        raise ParseError("map file missing origin", path=str(path))
    nodes = [
        Node(nid, to_planar(GeoPoint(lat, lon), origin), radius)
        for nid, lat, lon, radius in raw_nodes
    ]
    topology = GraphTopology(nodes, edges)
    for no, fields in raw_segments:
        kind = fields[1]
        if kind == "edge":
            sid = SegmentId.for_edge(fields[2])
            rest = fields[3:]
        elif kind == "turn":
            sid = SegmentId.for_turn(fields[2], fields[3])
            rest = fields[4:]
        else:
            raise ParseError(f"unknown segment kind {kind!r}", path=str(path), line=no)
        degree = _int(rest[0], path, no, "degree")
        length = _float(rest[1], path, no, "length")
        coeffs = [_float(v, path, no, "coefficient") for v in rest[2:]]
        if len(coeffs) != 2 * (degree + 1):
            raise ParseError(
                f"expected {2 * (degree + 1)} coefficients, got {len(coeffs)}",
                path=str(path), line=no,
            )
        curve = Curve2D(
            degree,
            tuple(coeffs[: degree + 1]),
            tuple(coeffs[degree + 1 :]),
            (0.0, length),
        )
        segments[sid] = MapSegment.from_curve(sid, curve, length)
    return RoadMap(topology, segments, origin)


# --- coverage plans ---------------------------------------------------------


def serialize_plan(plan: RoutePlan, meta: Mapping[str, float | int] | None = None) -> str:
    lines = ["# coverage plan"]
    for key, value in (meta or {}).items():
        lines.append(f"{key},{value}")
    lines.append(f"total-length,{fmt(plan.total_length)}")
    lines.append(f"legs,{len(plan.legs)}")
    for leg in plan.legs:
        lines.append("leg," + ",".join(leg.nodes))
    for (a, b), count in sorted(plan.pair_edge_counts.items()):
        lines.append(f"pair,{a},{b},{count}")
    return "\n".join(lines) + "\n"


def write_plan(path: str | Path, plan: RoutePlan, meta=None) -> None:
    write_atomic(path, serialize_plan(plan, meta))


def parse_plan(
    path: str | Path, topology: GraphTopology, lengths: Mapping[str, float]
) -> tuple[RoutePlan, dict[str, str]]:
    """Rebuild a plan against its topology; leg lengths are recomputed."""
    legs: list[Route] = []
    counts: dict[tuple[str, str], int] = {}
    meta: dict[str, str] = {}
    for no, fields in _rows(path):
        tag = fields[0]
        if tag == "leg":
            node_ids = tuple(fields[1:])
            edge_ids = tuple(e.id for e in topology.route_edges(node_ids))
            legs.append(Route(node_ids, edge_ids, sum(lengths[e] for e in edge_ids)))
        elif tag == "pair":
            counts[(fields[1], fields[2])] = _int(fields[3], path, no, "count")
        elif len(fields) == 2:
            meta[tag] = fields[1]
        else:
            raise ParseError(f"unknown record {tag!r}", path=str(path), line=no)
    total = sum(leg.length for leg in legs)
    return RoutePlan(tuple(legs), total, counts), meta


# --- poses -------------------------------------------------------------------


def serialize_poses(poses: Sequence[Optional[Pose]]) -> str:
    lines = ["# poses"]
    for pose in poses:
        if pose is None:
            lines.append("pose,none")
        elif pose.heading is None:
            lines.append(f"pose,{fmt(pose.t)},{fmt(pose.p.x)},{fmt(pose.p.y)},none")
        else:
            lines.append(
                f"pose,{fmt(pose.t)},{fmt(pose.p.x)},{fmt(pose.p.y)},{fmt(pose.heading)}"
            )
    return "\n".join(lines) + "\n"


def write_poses(path: str | Path, poses: Sequence[Optional[Pose]]) -> None:
    write_atomic(path, serialize_poses(poses))


def parse_poses(path: str | Path) -> list[Optional[Pose]]:
    out: list[Optional[Pose]] = []
    for no, fields in _rows(path):
        if fields[0] != "pose":
            raise ParseError(f"unknown record {fields[0]!r}", path=str(path), line=no)
        if len(fields) == 2 and fields[1] == "none":
            out.append(None)
            continue
        if len(fields) != 5:
            raise ParseError("pose needs t,x,y,heading", path=str(path), line=no)
        heading = None if fields[4] == "none" else _float(fields[4], path, no, "heading")
        out.append(
            Pose(
                _float(fields[1], path, no, "time"),
                PlanarPoint(
                    _float(fields[2], path, no, "x"), _float(fields[3], path, no, "y")
                ),
                heading,
            )
        )
    return out


# --- trajectory samples -------------------------------------------------------


@dataclass(frozen=True)
class TrajectorySample:
    """A pose with its future trajectory, tagged with the trace it came from."""

    trace_id: str
    pose: Pose
    trajectory: Trajectory


def serialize_samples(
    samples: Sequence[TrajectorySample], routes: Mapping[str, Sequence[str]]
) -> str:
    lines = ["# trajectory samples"]
    for trace_id in sorted(routes):
        lines.append(f"route,{trace_id}," + ",".join(routes[trace_id]))
    for s in samples:
        coords = ",".join(fmt(v) for v in s.trajectory.points.ravel())
        heading = fmt(s.pose.heading) if s.pose.heading is not None else "none"
        lines.append(
            f"sample,{s.trace_id},{fmt(s.pose.t)},{fmt(s.pose.p.x)},"
            f"{fmt(s.pose.p.y)},{heading},{coords}"
        )
    return "\n".join(lines) + "\n"


def write_samples(path, samples, routes) -> None:
    write_atomic(path, serialize_samples(samples, routes))


def parse_samples(
    path: str | Path,
) -> tuple[list[TrajectorySample], dict[str, tuple[str, ...]]]:
    samples: list[TrajectorySample] = []
    routes: dict[str, tuple[str, ...]] = {}
    n_coords = 2 * TRAJECTORY_POINTS
    for no, fields in _rows(path):
        tag = fields[0]
        if tag == "route":
            routes[fields[1]] = tuple(fields[2:])
        elif tag == "sample":
            if len(fields) != 6 + n_coords:
                raise ParseError(
                    f"sample needs {6 + n_coords} fields, got {len(fields)}",
                    path=str(path), line=no,
                )
            heading = None if fields[5] == "none" else _float(fields[5], path, no, "heading")
            pose = Pose(
                _float(fields[2], path, no, "time"),
                PlanarPoint(
                    _float(fields[3], path, no, "x"), _float(fields[4], path, no, "y")
                ),
                heading,
            )
            coords = np.array(
                [_float(v, path, no, "coordinate") for v in fields[6:]]
            ).reshape(TRAJECTORY_POINTS, 2)
            samples.append(TrajectorySample(fields[1], pose, Trajectory(coords)))
        else:
            raise ParseError(f"unknown record {tag!r}", path=str(path), line=no)
    return samples, routes


# --- control commands ----------------------------------------------------------


def serialize_controls(sets: Sequence[Sequence[ControlCommand]]) -> str:
    lines = ["# control commands: 7 speeds then 7 steering angles per row"]
    for cmds in sets:
        speeds = ",".join(fmt(c.speed) for c in cmds)
        angles = ",".join(fmt(c.steering_angle) for c in cmds)
        lines.append(f"controls,{speeds},{angles}")
    return "\n".join(lines) + "\n"


def write_controls(path, sets) -> None:
    write_atomic(path, serialize_controls(sets))


def parse_controls(path: str | Path) -> list[list[ControlCommand]]:
    out: list[list[ControlCommand]] = []
    for no, fields in _rows(path):
        if fields[0] != "controls":
            raise ParseError(f"unknown record {fields[0]!r}", path=str(path), line=no)
        if len(fields) != 1 + 2 * TRAJECTORY_POINTS:
            raise ParseError(
                f"controls needs {2 * TRAJECTORY_POINTS} values", path=str(path), line=no
            )
        values = [_float(v, path, no, "value") for v in fields[1:]]
        out.append(
            [
                ControlCommand(n + 1, values[n], values[TRAJECTORY_POINTS + n])
                for n in range(TRAJECTORY_POINTS)
            ]
        )
    return out


# --- reports --------------------------------------------------------------------


def _kv(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "none"
    if isinstance(value, int):
        return str(value)
    return fmt(value)


def serialize_pose_report(position: PoseMetrics, orientation: PoseMetrics) -> str:
    header = [
        "# 3-DOF pose prediction report",
        "#",
        "#              Response      Mean    Median",
        f"# Position   {position.response_rate * 100:9.2f}% {position.mean_err:9.3f} {position.median_err:9.3f}",
        f"# Orientation{orientation.response_rate * 100:9.2f}% {orientation.mean_err:9.3f} {orientation.median_err:9.3f}",
        "# (position in meters, orientation in degrees)",
    ]
    kv = [
        f"position_response,{_kv(position.response_rate)}",
        f"position_mean_err,{_kv(position.mean_err)}",
        f"position_median_err,{_kv(position.median_err)}",
        f"orientation_response,{_kv(orientation.response_rate)}",
        f"orientation_mean_err,{_kv(orientation.mean_err)}",
        f"orientation_median_err,{_kv(orientation.median_err)}",
    ]
    return "\n".join(header + kv) + "\n"


def serialize_controls_report(table: ControlMaeTable) -> str:
    secs = "".join(f"{f'{n}s':>8}" for n in range(1, TRAJECTORY_POINTS + 1))
    header = [
        "# control command MAE report",
        "#",
        f"#                    {secs}",
        "# MAE speed (m/s)    " + "".join(f"{v:8.3f}" for v in table.speed),
        "# MAE angle (deg)    " + "".join(f"{v:8.3f}" for v in table.angle),
    ]
    kv = [f"speed_mae_{n + 1}s,{_kv(v)}" for n, v in enumerate(table.speed)]
    kv += [f"angle_mae_{n + 1}s,{_kv(v)}" for n, v in enumerate(table.angle)]
    return "\n".join(header + kv) + "\n"


def serialize_direction_report(report: DirectionReport) -> str:
    secs = "".join(f"{f'{n}s':>8}" for n in range(1, TRAJECTORY_POINTS + 1))
    acc_cells = "".join(
        f"{a * 100:7.1f}%" if a is not None else "      - " for a in report.per_second_accuracy
    )
    header = [
        "# intersection direction accuracy report",
        "#",
        f"#          {secs}",
        "# accuracy " + acc_cells,
        "# counted  " + "".join(f"{c:8d}" for c in report.counted),
    ]
    kv = [
        f"direction_accuracy_{n + 1}s,{_kv(a)}"
        for n, a in enumerate(report.per_second_accuracy)
    ]
    kv += [f"direction_counted_{n + 1}s,{c}" for n, c in enumerate(report.counted)]
    return "\n".join(header + kv) + "\n"


def serialize_kv_report(title: str, values: Mapping[str, float | int | None]) -> str:
    lines = [f"# {title}"]
    lines += [f"{key},{_kv(value)}" for key, value in values.items()]
    return "\n".join(lines) + "\n"


def parse_report(path: str | Path) -> dict[str, Optional[float]]:
    out: dict[str, Optional[float]] = {}
    for no, fields in _rows(path):
        if len(fields) != 2:
            raise ParseError("report rows are key,value", path=str(path), line=no)
        out[fields[0]] = None if fields[1] == "none" else _float(fields[1], path, no, "value")
    return out


# --- PGM images -------------------------------------------------------------------


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Binary image (0/1) as an 8-bit PGM with 0/255 values."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ParseError(f"image must be 2D, got shape {img.shape}")
    data = (img.astype(np.uint8) * 255).tobytes()
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    write_atomic_bytes(path, header + data)


def read_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise ParseError("not a binary P5 PGM", path=str(path))
    try:
        width, height = (int(v) for v in parts[1].split())
        maxval = int(parts[2])
    except ValueError:
        raise ParseError("bad PGM header", path=str(path))
    if maxval != 255:
        raise ParseError(f"unsupported maxval {maxval}", path=str(path))
    data = np.frombuffer(parts[3][: width * height], dtype=np.uint8)
    if data.size != width * height:
        raise ParseError("truncated PGM payload", path=str(path))
    return (data.reshape(height, width) >= 128).astype(np.uint8)
