"""Synthetic world generation for desk-scale verification.

A synthetic world is a small intersection graph whose roads have
closed-form shapes (line segments and circular arcs), so every map
fidelity check has an analytic oracle. Drives follow a coverage plan at
constant speed, sampled at a fixed rate with additive Gaussian GPS noise,
and are written as ordinary trace files. Regeneration with one seed is
byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, InvalidInputError, ParseError
from .formats import (
    TraceData,
    _float,
    _rows,
    fmt,
    write_map,
    write_plan,
    write_topology,
    write_trace,
)
from .geo import GeoPoint, PlanarPoint, TimedSample, to_geodetic, to_planar
from .polyfit import fit_points
from .roadmap import (
    Edge,
    GraphTopology,
    MapSegment,
    Node,
    RoadMap,
    SegmentId,
    degree_for_length,
)
from .routing import RoutePlan, simulate_coverage

# Key-stream namespace for trace noise, distinct from the route simulator's.
_PHILOX_NAMESPACE = 0x53594E54


# --- closed-form path pieces -------------------------------------------------


@dataclass(frozen=True)
class LinePiece:
    p0: np.ndarray
    p1: np.ndarray

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))

    def point_at(self, s: float) -> np.ndarray:
        u = (self.p1 - self.p0) / self.length
        return self.p0 + s * u

    def tangent_at(self, s: float) -> np.ndarray:
        return (self.p1 - self.p0) / self.length

    def distance_to(self, p: np.ndarray) -> float:
        v = self.p1 - self.p0
        t = float(np.clip(np.dot(p - self.p0, v) / np.dot(v, v), 0.0, 1.0))
        return float(np.linalg.norm(self.p0 + t * v - p))


@dataclass(frozen=True)
class ArcPiece:
    center: np.ndarray
    radius: float
    theta0: float
    sweep: float  # signed; positive is counterclockwise

    @property
    def length(self) -> float:
        return self.radius * abs(self.sweep)

    def _theta(self, s: float) -> float:
        return self.theta0 + math.copysign(s / self.radius, self.sweep)

    def point_at(self, s: float) -> np.ndarray:
        th = self._theta(s)
        return self.center + self.radius * np.array([math.cos(th), math.sin(th)])

    def tangent_at(self, s: float) -> np.ndarray:
        th = self._theta(s)
        t = np.array([-math.sin(th), math.cos(th)])
        return t if self.sweep >= 0 else -t

    def distance_to(self, p: np.ndarray) -> float:
        rel = p - self.center
        ang = math.atan2(rel[1], rel[0])
        dth = (ang - self.theta0) * math.copysign(1.0, self.sweep)
        dth %= 2.0 * math.pi
        if dth <= abs(self.sweep):
            return abs(float(np.linalg.norm(rel)) - self.radius)
        return min(
            float(np.linalg.norm(p - self.point_at(0.0))),
            float(np.linalg.norm(p - self.point_at(self.length))),
        )


Piece = LinePiece | ArcPiece


@dataclass
class PiecePath:
    """Concatenated pieces with arc-length addressing."""

    pieces: list[Piece]
    offsets: list[float] = field(init=False)

    def __post_init__(self):
        self.offsets = [0.0]
        for piece in self.pieces:
            self.offsets.append(self.offsets[-1] + piece.length)

    @property
    def length(self) -> float:
        return self.offsets[-1]

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        for i, piece in enumerate(self.pieces):
            if s <= self.offsets[i + 1] or i == len(self.pieces) - 1:
                return piece.point_at(s - self.offsets[i])
        raise AssertionError("unreachable")

    def distance_to(self, p: np.ndarray) -> float:
        return min(piece.distance_to(p) for piece in self.pieces)


def arc_through_bulge(p0: np.ndarray, p1: np.ndarray, bulge: float) -> ArcPiece:
    """Arc from p0 to p1 whose midpoint bows ``bulge`` meters toward the
    left normal of p0->p1 (negative bows right)."""
    chord = p1 - p0
    c_len = float(np.linalg.norm(chord))
    if c_len == 0.0 or bulge == 0.0:
        raise InvalidInputError("arc needs distinct endpoints and nonzero bulge")
    n_left = np.array([-chord[1], chord[0]]) / c_len
    mid = 0.5 * (p0 + p1)
    h = 0.5 * c_len
    s = abs(bulge)
    radius = (h * h + s * s) / (2.0 * s)
    center = mid + n_left * math.copysign(radius - s, -bulge)
    theta0 = math.atan2(p0[1] - center[1], p0[0] - center[0])
    theta1 = math.atan2(p1[1] - center[1], p1[0] - center[0])
    sweep = (theta1 - theta0) % (2.0 * math.pi)
    if bulge < 0.0:
        # bowing right means counterclockwise travel around the center
        return ArcPiece(center, radius, theta0, sweep)
    return ArcPiece(center, radius, theta0, sweep - 2.0 * math.pi)


def tangent_arc(p: np.ndarray, tangent: np.ndarray, q: np.ndarray) -> Piece:
    """Arc from p to q whose tangent at p matches ``tangent``; a line when
    the three constraints are collinear."""
    n = np.array([-tangent[1], tangent[0]])
    rel = p - q
    denom = float(np.dot(n, rel))
    dist = float(np.linalg.norm(rel))
    if dist < 1e-9:
        raise InvalidInputError("degenerate turn: endpoints coincide")
    if abs(denom) < 1e-9 * dist or abs(dist * dist / (2 * denom)) > 1e6:
        return LinePiece(p.copy(), q.copy())
    s = -dist * dist / (2.0 * denom)
    center = p + s * n
    radius = abs(s)
    theta0 = math.atan2(p[1] - center[1], p[0] - center[0])
    theta1 = math.atan2(q[1] - center[1], q[0] - center[0])
    if s > 0:  # counterclockwise start along +tangent
        sweep = (theta1 - theta0) % (2.0 * math.pi)
    else:
        sweep = (theta1 - theta0) % (2.0 * math.pi) - 2.0 * math.pi
    return ArcPiece(center, radius, theta0, sweep)


def _clip_param(piece: Piece, center: np.ndarray, radius: float, from_start: bool) -> float:
    """Arc length at which the piece crosses the node disc boundary,
    scanning from the given end; bisection on the (locally monotone)
    center distance."""
    total = piece.length
    n_steps = max(8, int(total))
    grid = np.linspace(0.0, total, n_steps + 1)
    dists = [float(np.linalg.norm(piece.point_at(s) - center)) - radius for s in grid]
    order = range(n_steps) if from_start else range(n_steps - 1, -1, -1)
    for i in order:
        a, b = grid[i], grid[i + 1]
        fa, fb = dists[i], dists[i + 1]
        if fa == 0.0:
            return float(a)
        if fa * fb < 0.0 or fb == 0.0:
            for _ in range(80):
                m = 0.5 * (a + b)
                fm = float(np.linalg.norm(piece.point_at(m) - center)) - radius
                if fa * fm <= 0.0:
                    b, fb = m, fm
                else:
                    a, fa = m, fm
            return 0.5 * (a + b)
    raise DataError("edge geometry never crosses its node disc boundary")


def sub_piece(piece: Piece, s0: float, s1: float) -> Piece:
    if isinstance(piece, LinePiece):
        return LinePiece(piece.point_at(s0), piece.point_at(s1))
    th0 = piece._theta(s0)
    sweep = math.copysign((s1 - s0) / piece.radius, piece.sweep)
    return ArcPiece(piece.center, piece.radius, th0, sweep)


# --- world specification -------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Parsed synthetic world specification."""

    origin: GeoPoint
    seed: int
    noise_sigma: float
    sample_rate_hz: float
    speed_mps: float
    km_limit_m: float
    runs: int
    min_crossings: int
    min_passes: int
    nodes: tuple[tuple[str, float, float, float], ...]  # id, x, y, radius
    edges: tuple[tuple[str, str, str, float], ...]  # id, from, to, bulge (0 = line)


def parse_synth_spec(path: str | Path) -> SynthSpec:
    origin = None
    kv: dict[str, str] = {}
    nodes = []
    edges = []
    for no, fields in _rows(path):
        tag = fields[0]
        if tag == "origin":
            origin = GeoPoint(
                _float(fields[1], path, no, "latitude"),
                _float(fields[2], path, no, "longitude"),
            )
        elif tag == "node":
            if len(fields) != 5:
                raise ParseError("node needs id,x,y,radius", path=str(path), line=no)
            nodes.append((
                fields[1],
                _float(fields[2], path, no, "x"),
                _float(fields[3], path, no, "y"),
                _float(fields[4], path, no, "radius"),
            ))
        elif tag == "edge":
            if len(fields) == 5 and fields[4] == "line":
                bulge = 0.0
            elif len(fields) == 6 and fields[4] == "arc":
                bulge = _float(fields[5], path, no, "bulge")
            else:
                raise ParseError(
                    "edge needs id,from,to,line or id,from,to,arc,bulge",
                    path=str(path), line=no,
                )
            edges.append((fields[1], fields[2], fields[3], bulge))
        elif len(fields) == 2:
            kv[tag] = fields[1]
        else:
            raise ParseError(f"unknown record {tag!r}", path=str(path), line=no)
    if origin is None:
        raise ParseError("spec missing origin", path=str(path))
    if not nodes or not edges:
        raise ParseError("spec needs nodes and edges", path=str(path))

    def need(key: str) -> str:
        if key not in kv:
            raise ParseError(f"spec missing {key!r}", path=str(path))
        return kv[key]

    return SynthSpec(
        origin=origin,
        seed=int(need("seed")),
        noise_sigma=float(need("noise-sigma")),
        sample_rate_hz=float(need("sample-rate")),
        speed_mps=float(need("speed")),
        km_limit_m=float(need("km-limit")) * 1000.0,
        runs=int(need("runs")),
        min_crossings=int(need("min-crossings")),
        min_passes=int(kv.get("min-passes", "3")),
        nodes=tuple(nodes),
        edges=tuple(edges),
    )


# --- world construction ----------------------------------------------------------


class SyntheticWorld:
    """Analytic ground-truth geometry, coverage plan, and noisy traces."""

    def __init__(self, spec: SynthSpec, max_traces: Optional[int] = None):
        self.spec = spec
        self.topology = GraphTopology(
            [Node(nid, PlanarPoint(x, y), r) for nid, x, y, r in spec.nodes],
            [Edge(eid, a, b) for eid, a, b, _ in spec.edges],
        )
        self._edge_geometry: dict[str, Piece] = {}
        self.edge_shapes: dict[str, Piece] = {}  # clipped to outside the discs
        for eid, a, b, bulge in spec.edges:
            pa = self.topology.node_by_id[a].center.as_array()
            pb = self.topology.node_by_id[b].center.as_array()
            full = LinePiece(pa, pb) if bulge == 0.0 else arc_through_bulge(pa, pb, bulge)
            ra = self.topology.node_by_id[a].radius
            rb = self.topology.node_by_id[b].radius
            s_in = _clip_param(full, pa, ra, from_start=True)
            s_out = _clip_param(full, pb, rb, from_start=False)
            if s_out - s_in < 2.0:
                raise DataError(f"edge {eid}: too short once clipped to its node discs")
            self._edge_geometry[eid] = full
            self.edge_shapes[eid] = sub_piece(full, s_in, s_out)
        self.lengths = {eid: shape.length for eid, shape in self.edge_shapes.items()}
        self.plan: RoutePlan = simulate_coverage(
            self.topology,
            self.lengths,
            seed=spec.seed,
            km_limit=spec.km_limit_m,
            n_runs=spec.runs,
            min_crossings=spec.min_crossings,
        )
        passes: dict[str, int] = {eid: 0 for eid in self.lengths}
        for leg in self.plan.legs:
            for eid in leg.edges:
                passes[eid] += 1
        starved = sorted(e for e, n in passes.items() if n < spec.min_passes)
        if starved:
            raise DataError(
                f"plan covers {starved} fewer than {spec.min_passes} times; "
                "raise km-limit or runs"
            )
        self.turn_shapes: dict[tuple[str, str], Piece] = {}
        for leg in self.plan.legs:
            for e_in, e_out in zip(leg.edges, leg.edges[1:]):
                self._ensure_turn(e_in, e_out)
        self.truth_map = self._fit_truth_map()
        legs = self.plan.legs if max_traces is None else self.plan.legs[:max_traces]
        self.traces: list[TraceData] = [
            self._drive_leg(i, leg) for i, leg in enumerate(legs)
        ]

    def _ensure_turn(self, e_in: str, e_out: str) -> None:
        key = (e_in, e_out)
        if key in self.turn_shapes:
            return
        a = self.edge_shapes[e_in]
        b = self.edge_shapes[e_out]
        p = a.point_at(a.length)
        t = a.tangent_at(a.length)
        q = b.point_at(0.0)
        self.turn_shapes[key] = tangent_arc(p, t, q)

    def _fit_segment(self, sid: SegmentId, shape: Piece) -> MapSegment:
        length = shape.length
        n = max(32, int(2 * length) + 1)
        d = np.linspace(0.0, length, n)
        pts = np.array([shape.point_at(s) for s in d])
        degree = degree_for_length(length)
        curve = fit_points(d, pts[:, 0], pts[:, 1], degree)
        return MapSegment.from_curve(sid, curve, length)

    def _fit_truth_map(self) -> RoadMap:
        segments: dict[SegmentId, MapSegment] = {}
        for eid, shape in self.edge_shapes.items():
            sid = SegmentId.for_edge(eid)
            segments[sid] = self._fit_segment(sid, shape)
        for (e_in, e_out), shape in self.turn_shapes.items():
            sid = SegmentId.for_turn(e_in, e_out)
            segments[sid] = self._fit_segment(sid, shape)
        return RoadMap(self.topology, segments, self.spec.origin)

    def leg_path(self, leg) -> PiecePath:
        pieces: list[Piece] = []
        for i, eid in enumerate(leg.edges):
            pieces.append(self.edge_shapes[eid])
            if i + 1 < len(leg.edges):
                pieces.append(self.turn_shapes[(eid, leg.edges[i + 1])])
        return PiecePath(pieces)

    def truth_distance(self, p: np.ndarray) -> float:
        """Distance from a point to the nearest analytic road shape."""
        best = min(shape.distance_to(p) for shape in self.edge_shapes.values())
        if self.turn_shapes:
            best = min(best, min(s.distance_to(p) for s in self.turn_shapes.values()))
        return best

    def _drive_leg(self, index: int, leg) -> TraceData:
        spec = self.spec
        path = self.leg_path(leg)
        step = spec.speed_mps / spec.sample_rate_hz
        count = int(path.length / step) + 1
        rng = np.random.Generator(
            np.random.Philox(key=[spec.seed, _PHILOX_NAMESPACE]).jumped(index)
        )
        noise = rng.normal(0.0, spec.noise_sigma, (count, 2)) if spec.noise_sigma > 0 else np.zeros((count, 2))
        rows = []
        for k in range(count):
            p = path.point_at(k * step) + noise[k]
            g = to_geodetic(PlanarPoint(float(p[0]), float(p[1])), spec.origin)
            ms = round(k * 1000.0 / spec.sample_rate_hz)
            # re-parse through the printed precision so in-memory samples
            # equal what a reader of the trace file will see
            rows.append((ms, float(fmt(g.lat)), float(fmt(g.lon))))
        trace_text_rows = tuple(rows)
        samples = tuple(
            TimedSample((ms - rows[0][0]) / 1000.0, to_planar(GeoPoint(lat, lon), spec.origin))
            for ms, lat, lon in rows
        )
        return TraceData(spec.origin, leg.nodes, trace_text_rows, samples)


def generate_synthetic(
    spec: SynthSpec,
    out_dir: Optional[str | Path] = None,
    max_traces: Optional[int] = None,
) -> SyntheticWorld:
    """Build a synthetic world and optionally write all its artifacts."""
    world = SyntheticWorld(spec, max_traces=max_traces)
    if out_dir is not None:
        out = Path(out_dir)
        (out / "traces").mkdir(parents=True, exist_ok=True)
        write_topology(out / "topology.txt", world.topology, spec.origin)
        write_map(out / "truth-map.txt", world.truth_map)
        write_plan(
            out / "plan.txt",
            world.plan,
            meta={
                "seed": spec.seed,
                "km-limit": fmt(spec.km_limit_m),
                "runs": spec.runs,
                "min-crossings": spec.min_crossings,
            },
        )
        for i, trace in enumerate(world.traces):
            write_trace(out / "traces" / f"trace_{i:03d}.txt", trace)
    return world
