"""Analytical road map: build from bucketed traces, query, rasterize.

The map is a directed intersection graph plus one fitted polynomial curve
per map segment. Segments are either a road between two intersections
(edge segment) or one specific way of crossing an intersection (turn
segment, keyed by the in/out edge pair). Curves are functions of arc
distance and are resampled at 1 m into polylines for geometric queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import (
    InsufficientDataError,
    InvalidInputError,
    RouteMismatchError,
    TraceCorruptError,
)
from .geo import GeoPoint, PlanarPoint, TimedSample
from .polyfit import Curve2D, derivative_at, evaluate, evaluate_many, fit_points

SAMPLE_SPACING_M = 1.0
ROAD_HALF_WIDTH_M = 2.0
DEFAULT_DELTA_M = 5.0
# Consecutive trace samples farther apart than this are treated as corruption.
TELEPORT_GAP_M = 50.0
# How far from the first node's center a trace may start before its declared
# route is considered wrong (covers GPS noise plus one sampling stride).
START_SLACK_M = 25.0
MIN_DEGREE = 3
MAX_DEGREE = 9
DEGREE_LENGTH_STEP_M = 75.0


@dataclass(frozen=True)
class Node:
    id: str
    center: PlanarPoint
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidInputError(f"node {self.id}: radius must be positive")

    def contains(self, p: PlanarPoint) -> bool:
        return p.distance_to(self.center) < self.radius


@dataclass(frozen=True)
class Edge:
    id: str
    from_node: str
    to_node: str


class GraphTopology:
    """Directed graph of intersections (nodes) and roads (edges)."""

    def __init__(self, nodes: Iterable[Node], edges: Iterable[Edge]):
        self.nodes = list(nodes)
        self.edges = list(edges)
        self.node_by_id = {n.id: n for n in self.nodes}
        if len(self.node_by_id) != len(self.nodes):
            raise InvalidInputError("duplicate node ids")
        self.edge_by_id = {e.id: e for e in self.edges}
        if len(self.edge_by_id) != len(self.edges):
            raise InvalidInputError("duplicate edge ids")
        self.edge_by_pair: dict[tuple[str, str], Edge] = {}
        for e in self.edges:
            if e.from_node not in self.node_by_id or e.to_node not in self.node_by_id:
                raise InvalidInputError(f"edge {e.id} references unknown node")
            if e.from_node == e.to_node:
                raise InvalidInputError(f"edge {e.id} is a self-loop")
            pair = (e.from_node, e.to_node)
            if pair in self.edge_by_pair:
                # Routes are declared as node sequences, so parallel edges
                # would make them ambiguous.
                raise InvalidInputError(f"parallel edge {e.id} duplicates {pair}")
            self.edge_by_pair[pair] = e
        self.out_edges: dict[str, list[Edge]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            self.out_edges[e.from_node].append(e)

    def route_edges(self, node_ids: Sequence[str]) -> list[Edge]:
        """Resolve a node sequence into the directed edges connecting it."""
        if len(node_ids) < 2:
            raise InvalidInputError("a route needs at least two nodes")
        out = []
        for a, b in zip(node_ids, node_ids[1:]):
            edge = self.edge_by_pair.get((a, b))
            if edge is None:
                raise InvalidInputError(f"no directed edge {a}->{b} in topology")
            out.append(edge)
        return out

    def node_containing(self, p: PlanarPoint) -> Optional[Node]:
        """The node whose disc contains ``p`` (nearest center wins overlaps)."""
        best = None
        best_d = math.inf
        for n in self.nodes:
            d = p.distance_to(n.center)
            if d < n.radius and d < best_d:
                best, best_d = n, d
        return best


@dataclass(frozen=True)
class SegmentId:
    """Identity of a map segment: a road edge or a turn through a node."""

    kind: str  # "edge" or "turn"
    first: str  # edge id, or the incoming edge of a turn
    second: str = ""  # outgoing edge of a turn

    @classmethod
    def for_edge(cls, edge_id: str) -> "SegmentId":
        return cls("edge", edge_id)

    @classmethod
    def for_turn(cls, in_edge_id: str, out_edge_id: str) -> "SegmentId":
        return cls("turn", in_edge_id, out_edge_id)

    @property
    def sort_key(self) -> tuple[int, str, str]:
        """Canonical ordering: edge segments before turns, then by ids."""
        return (0 if self.kind == "edge" else 1, self.first, self.second)

    def __str__(self) -> str:
        if self.kind == "edge":
            return f"edge({self.first})"
        return f"turn({self.first}->{self.second})"


@dataclass(frozen=True)
class MapSegment:
    """A fitted curve over arc distance plus its 1 m polyline."""

    id: SegmentId
    curve: Curve2D
    length: float
    polyline: np.ndarray = field(compare=False)

    @classmethod
    def from_curve(cls, sid: SegmentId, curve: Curve2D, length: float) -> "MapSegment":
        if length <= 0:
            raise InvalidInputError(f"{sid}: non-positive length {length}")
        grid = np.arange(0.0, math.floor(length) + 0.5, SAMPLE_SPACING_M)
        poly = evaluate_many(curve, grid)
        poly.setflags(write=False)
        return cls(sid, curve, length, poly)

    def end_point(self) -> PlanarPoint:
        return evaluate(self.curve, self.length)

    def start_point(self) -> PlanarPoint:
        return evaluate(self.curve, 0.0)


@dataclass(frozen=True)
class ProjectionResult:
    segment: SegmentId
    d: float
    q: PlanarPoint
    dist: float


class _QueryIndex:
    """Flat sub-segment arrays over all polylines, in canonical segment order."""

    def __init__(self, segments: Mapping[SegmentId, MapSegment]):
        if not segments:
            raise InvalidInputError("map has no segments to project onto")
        self.order = sorted(segments, key=lambda s: s.sort_key)
        ax, ay, bx, by, seg_of, local = [], [], [], [], [], []
        for si, sid in enumerate(self.order):
            pts = segments[sid].polyline
            if pts.shape[0] >= 2:
                a, b = pts[:-1], pts[1:]
            else:
                a = b = pts  # degenerate: a single-vertex polyline
            n = a.shape[0]
            ax.append(a[:, 0])
            ay.append(a[:, 1])
            bx.append(b[:, 0])
            by.append(b[:, 1])
            seg_of.append(np.full(n, si, dtype=np.int64))
            local.append(np.arange(n, dtype=np.int64))
        self.ax = np.ascontiguousarray(np.concatenate(ax))
        self.ay = np.ascontiguousarray(np.concatenate(ay))
        self.bx = np.ascontiguousarray(np.concatenate(bx))
        self.by = np.ascontiguousarray(np.concatenate(by))
        self.seg_of = np.concatenate(seg_of)
        self.local = np.concatenate(local)


class RoadMap:
    """An immutable built map; all queries are read-only and thread-safe."""

    def __init__(
        self,
        topology: GraphTopology,
        segments: Mapping[SegmentId, MapSegment],
        origin: GeoPoint,
    ):
        for e in topology.edges:
            if SegmentId.for_edge(e.id) not in segments:
                raise InsufficientDataError(f"edge {e.id} has no fitted segment")
        for sid in segments:
            if sid.kind == "turn":
                e_in = topology.edge_by_id.get(sid.first)
                e_out = topology.edge_by_id.get(sid.second)
                if e_in is None or e_out is None:
                    raise InvalidInputError(f"{sid}: unknown edge")
                if e_in.to_node != e_out.from_node:
                    raise InvalidInputError(f"{sid}: edges do not share a node")
        self.topology = topology
        self.segments = dict(segments)
        self.origin = origin
        self._index: Optional[_QueryIndex] = None

    def query_index(self) -> _QueryIndex:
        if self._index is None:
            self._index = _QueryIndex(self.segments)
        return self._index

    def turns_at_node(self, node_id: str) -> list[SegmentId]:
        out = []
        for sid in self.segments:
            if sid.kind == "turn":
                if self.topology.edge_by_id[sid.first].to_node == node_id:
                    out.append(sid)
        return sorted(out, key=lambda s: s.sort_key)


def degree_for_length(length: float) -> int:
    """Fit degree grows with segment length, clamped to a sane band."""
    return min(MAX_DEGREE, MIN_DEGREE + int(length // DEGREE_LENGTH_STEP_M))


def min_bucket_points(degree: int) -> int:
    return 2 * (degree + 1)


TraceInput = tuple[Sequence[str], Sequence[TimedSample]]
Bucket = list[tuple[float, PlanarPoint]]


def bucket_samples(
    traces: Iterable[TraceInput], topology: GraphTopology
) -> dict[SegmentId, Bucket]:
    """Assign every trace sample to its segment bucket with an arc distance.

    Distance restarts at 0 on segment entry and accumulates the Euclidean
    distance between consecutive samples. A sample inside a node's disc
    belongs to that node's turn segment (the in/out pair comes from the
    declared route). Samples inside the first node's disc before the first
    edge, or inside the last node's disc after arrival, have no turn to
    belong to and are dropped.
    """
    buckets: dict[SegmentId, Bucket] = {}

    def push(sid: SegmentId, d: float, p: PlanarPoint) -> None:
        buckets.setdefault(sid, []).append((d, p))

    for trace_idx, (route, samples) in enumerate(traces):
        edges = topology.route_edges(route)
        if not samples:
            continue
        for prev, cur in zip(samples, samples[1:]):
            gap = cur.p.distance_to(prev.p)
            if gap > TELEPORT_GAP_M:
                raise TraceCorruptError(
                    f"trace {trace_idx}: {gap:.1f} m jump between samples at "
                    f"t={prev.t:.3f} and t={cur.t:.3f}"
                )
        first_node = topology.node_by_id[route[0]]
        if samples[0].p.distance_to(first_node.center) > first_node.radius + START_SLACK_M:
            raise RouteMismatchError(
                f"trace {trace_idx}: starts {samples[0].p.distance_to(first_node.center):.1f} m "
                f"from declared first node {first_node.id}"
            )
        k = 0
        while k < len(samples) and first_node.contains(samples[k].p):
            k += 1
        # state: ("edge", i) on edges[i]; ("turn", i) inside the node
        # between edges[i] and edges[i+1]. Transitions require the next
        # sample to agree (debounce), so one noise-flickered sample near a
        # disc boundary cannot advance the machine through a turn.
        state = ("edge", 0)
        d = 0.0
        prev_p: Optional[PlanarPoint] = None
        kept = samples[k:]
        for j, s in enumerate(kept):
            kind, i = state
            nxt = kept[j + 1].p if j + 1 < len(kept) else s.p
            if kind == "edge":
                to_node = topology.node_by_id[edges[i].to_node]
                if to_node.contains(s.p) and to_node.contains(nxt):
                    if i == len(edges) - 1:
                        break  # arrived: no outgoing edge for a final turn
                    state = ("turn", i)
                    d = 0.0
                    prev_p = None
                    kind, i = state
            else:
                mid_node = topology.node_by_id[edges[i].to_node]
                if not mid_node.contains(s.p) and not mid_node.contains(nxt):
                    state = ("edge", i + 1)
                    d = 0.0
                    prev_p = None
                    kind, i = state
            if prev_p is not None:
                d += s.p.distance_to(prev_p)
            sid = (
                SegmentId.for_edge(edges[i].id)
                if kind == "edge"
                else SegmentId.for_turn(edges[i].id, edges[i + 1].id)
            )
            push(sid, d, s.p)
            prev_p = s.p
    return buckets


def _arc_length_reparameterized(curve: Curve2D, d_max: float, degree: int) -> tuple[Curve2D, float]:
    """Refit a curve so its parameter is true arc length.

    Chord-accumulated bucket distances are inflated by GPS noise, which
    would compress the nominal 1 m polyline spacing; measuring arc length
    along the smooth fitted curve removes that bias.
    """
    grid = np.arange(0.0, d_max, 0.25)
    grid = np.append(grid, d_max)
    pts = evaluate_many(curve, grid)
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(steps)])
    refit = fit_points(s, pts[:, 0], pts[:, 1], degree)
    return refit, float(s[-1])


def fit_segments(
    buckets: Mapping[SegmentId, Bucket], topology: GraphTopology
) -> dict[SegmentId, MapSegment]:
    """Fit one distance-parameterized curve per bucket.

    Every topology edge must have a bucket with enough points; turn
    segments exist only where traces crossed them. Each curve is
    reparameterized by measured arc length after fitting, so segment
    lengths and polylines are in true meters.
    """
    for e in topology.edges:
        if SegmentId.for_edge(e.id) not in buckets:
            raise InsufficientDataError(f"edge {e.id}: never traversed by any trace")
    out: dict[SegmentId, MapSegment] = {}
    for sid in sorted(buckets, key=lambda s: s.sort_key):
        pts = buckets[sid]
        if not pts:
            raise InsufficientDataError(f"{sid}: empty bucket")
        ds = np.array([d for d, _ in pts])
        length = float(ds.max())
        if length <= 0.0:
            raise InsufficientDataError(f"{sid}: bucket spans zero distance")
        degree = degree_for_length(length)
        need = min_bucket_points(degree)
        if len(pts) < need:
            raise InsufficientDataError(
                f"{sid}: {len(pts)} samples, need at least {need} for degree {degree}"
            )
        xs = np.array([p.x for _, p in pts])
        ys = np.array([p.y for _, p in pts])
        curve = fit_points(ds, xs, ys, degree)
        curve, length = _arc_length_reparameterized(curve, length, degree)
        out[sid] = MapSegment.from_curve(sid, curve, length)
    return out


def _neighbors(
    segments: Mapping[SegmentId, MapSegment], sid: SegmentId
) -> tuple[list[MapSegment], list[MapSegment]]:
    """Predecessor and successor segments sharing a boundary with ``sid``."""
    preds, succs = [], []
    if sid.kind == "edge":
        for other in segments.values():
            if other.id.kind == "turn":
                if other.id.second == sid.first:
                    preds.append(other)
                if other.id.first == sid.first:
                    succs.append(other)
    else:
        pred = segments.get(SegmentId.for_edge(sid.first))
        succ = segments.get(SegmentId.for_edge(sid.second))
        if pred is not None:
            preds.append(pred)
        if succ is not None:
            succs.append(succ)
    key = lambda seg: seg.id.sort_key
    return sorted(preds, key=key), sorted(succs, key=key)


# Search span around a segment end when snapping it to its physical boundary,
# and how far beyond the fitted data a snap may extend a segment (straight
# extensions grow less trustworthy with distance).
_SNAP_RANGE_M = 15.0
_MAX_EXTENSION_M = 8.0


def _end_direction(curve: Curve2D, bound: float, inward: float) -> tuple[float, float]:
    """Unit direction of the curve at an end, from a short inward secant.

    The instantaneous end derivative of a high-degree fit is its least
    stable quantity; a secant over the last several meters is robust.
    """
    span = min(10.0, 0.5 * (curve.param_range[1] - curve.param_range[0]))
    a = evaluate(curve, bound)
    b = evaluate(curve, bound + math.copysign(span, inward))
    dx, dy = b.x - a.x, b.y - a.y
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        return 0.0, 0.0
    return dx / norm * math.copysign(1.0, inward), dy / norm * math.copysign(1.0, inward)


def _evaluate_extended(curve: Curve2D, s: np.ndarray) -> np.ndarray:
    """Evaluate a curve, continuing straight along its ends outside its range.

    High-degree polynomials explode under extrapolation, but short
    boundary extensions (a few meters) along the end direction stay
    faithful to the road, so re-anchoring may reach slightly beyond the
    fitted data.
    """
    s = np.asarray(s, dtype=float)
    lo, hi = curve.param_range
    out = evaluate_many(curve, np.clip(s, lo, hi))
    for bound, inward, mask in ((lo, 1.0, s < lo), (hi, -1.0, s > hi)):
        if np.any(mask):
            dx, dy = _end_direction(curve, bound, inward)
            p = evaluate(curve, bound)
            off = s[mask] - bound
            out[mask, 0] = p.x + off * dx
            out[mask, 1] = p.y + off * dy
    return out


def _disc_crossing(curve: Curve2D, center: PlanarPoint, radius: float, near: float) -> float:
    """Parameter nearest ``near`` where the (extended) curve crosses the
    disc boundary, or ``near`` when no crossing exists in the search span."""
    grid = np.arange(near - _SNAP_RANGE_M, near + _SNAP_RANGE_M + 0.0625, 0.125)
    pts = _evaluate_extended(curve, grid)
    f = np.hypot(pts[:, 0] - center.x, pts[:, 1] - center.y) - radius
    crossings = []
    for i in range(grid.size - 1):
        if f[i] == 0.0:
            crossings.append(float(grid[i]))
        elif f[i] * f[i + 1] < 0.0:
            a, b, fa = grid[i], grid[i + 1], f[i]
            for _ in range(50):
                m = 0.5 * (a + b)
                px, py = _evaluate_extended(curve, np.array([m]))[0]
                fm = math.hypot(px - center.x, py - center.y) - radius
                if fa * fm <= 0.0:
                    b = m
                else:
                    a, fa = m, fm
            crossings.append(0.5 * (a + b))
    if not crossings:
        return near
    return min(crossings, key=lambda s: abs(s - near))


def _nearest_param(curve: Curve2D, p: PlanarPoint, length: float) -> float:
    """Parameter of the (extended) curve point nearest ``p``."""
    grid = np.arange(-_SNAP_RANGE_M, length + _SNAP_RANGE_M + 0.025, 0.05)
    pts = _evaluate_extended(curve, grid)
    d2 = (pts[:, 0] - p.x) ** 2 + (pts[:, 1] - p.y) ** 2
    return float(grid[int(np.argmin(d2))])


def _reanchored(seg: MapSegment, s0: float, s1: float) -> MapSegment:
    """The segment's curve restricted to [s0, s1] and re-fitted from 0."""
    if s1 - s0 < 1.0 or (abs(s0) < 1e-9 and abs(s1 - seg.length) < 1e-9):
        return seg
    grid = np.arange(s0, s1, 0.25)
    grid = np.append(grid, s1)
    pts = _evaluate_extended(seg.curve, grid)
    curve = fit_points(grid - s0, pts[:, 0], pts[:, 1], seg.curve.degree)
    return MapSegment.from_curve(seg.id, curve, s1 - s0)


def _snap_edge_to_discs(seg: MapSegment, topology: GraphTopology) -> MapSegment:
    """Re-anchor an edge segment so its ends sit on its node-disc boundaries.

    Bucket distance anchors jitter with GPS noise, so consecutive segments
    disagree about where their shared boundary lies along the road. The
    disc boundary crossing of the segment's own smooth curve is a far
    tighter estimate of that physical point.
    """
    edge = topology.edge_by_id[seg.id.first]
    start_node = topology.node_by_id[edge.from_node]
    end_node = topology.node_by_id[edge.to_node]
    s0 = _disc_crossing(seg.curve, start_node.center, start_node.radius, 0.0)
    s1 = _disc_crossing(seg.curve, end_node.center, end_node.radius, seg.length)
    s0 = max(s0, -_MAX_EXTENSION_M)
    s1 = min(s1, seg.length + _MAX_EXTENSION_M)
    return _reanchored(seg, s0, s1)


def _anchor_turn_to_edges(
    seg: MapSegment,
    edge_in: Optional[MapSegment],
    edge_out: Optional[MapSegment],
) -> MapSegment:
    """Re-anchor a turn so its ends face the snapped boundary points of its
    edges (turn fits are short and noisy; the edges anchor far better)."""
    s0 = _nearest_param(seg.curve, edge_in.end_point(), seg.length) if edge_in else 0.0
    s1 = _nearest_param(seg.curve, edge_out.start_point(), seg.length) if edge_out else seg.length
    s0 = max(s0, -_MAX_EXTENSION_M)
    s1 = min(s1, seg.length + _MAX_EXTENSION_M)
    return _reanchored(seg, s0, s1)


def refit_with_neighbors(
    segments: Mapping[SegmentId, MapSegment],
    topology: GraphTopology,
    delta: float,
    origin: GeoPoint = GeoPoint(0.0, 0.0),
) -> RoadMap:
    """Refit every segment against its own 1 m samples plus neighbor windows.

    Segment ends are first snapped to their node-disc boundary crossings
    (aligning the shared boundaries along the road), then every segment is
    refitted against its own 1 m samples plus neighbor samples within
    ``delta`` of the boundary, mapped to extended distances in [-delta, 0]
    and [length, length + delta]. That pulls the segment ends onto their
    neighbors so consecutive segments connect. All refits read the
    incoming fits, never each other's output, so results do not depend on
    iteration order.
    """
    if delta <= 0:
        raise InvalidInputError(f"delta must be positive, got {delta}")
    snapped: dict[SegmentId, MapSegment] = {}
    for sid in sorted(segments, key=lambda s: s.sort_key):
        if sid.kind == "edge":
            snapped[sid] = _snap_edge_to_discs(segments[sid], topology)
    for sid in sorted(segments, key=lambda s: s.sort_key):
        if sid.kind == "turn":
            snapped[sid] = _anchor_turn_to_edges(
                segments[sid],
                snapped.get(SegmentId.for_edge(sid.first)),
                snapped.get(SegmentId.for_edge(sid.second)),
            )
    segments = snapped
    new_segments: dict[SegmentId, MapSegment] = {}
    for sid in sorted(segments, key=lambda s: s.sort_key):
        seg = segments[sid]
        preds, succs = _neighbors(segments, sid)
        # GPS noise delays confident disc entry, so a turn's observed span
        # starts short of the boundary its in-edge ends at (and symmetrically
        # at its exit); dilate the turn's frame by those unobserved
        # stretches so the boundary windows line up, and let the refit
        # bridge them.
        head_gap = tail_gap = 0.0
        if sid.kind == "turn":
            if preds:
                fx, fy = _end_direction(seg.curve, 0.0, 1.0)
                e = preds[0].end_point()
                p0 = seg.start_point()
                head_gap = float(np.clip((p0.x - e.x) * fx + (p0.y - e.y) * fy, 0.0, 10.0))
            if succs:
                fx, fy = _end_direction(seg.curve, seg.length, -1.0)
                e = succs[0].start_point()
                p1 = seg.end_point()
                tail_gap = float(np.clip((e.x - p1.x) * fx + (e.y - p1.y) * fy, 0.0, 10.0))
        total = head_gap + seg.length + tail_gap
        own_d = np.arange(0.0, math.floor(seg.length) + 0.5, SAMPLE_SPACING_M)
        if own_d[-1] < seg.length:
            own_d = np.append(own_d, seg.length)
        own_n = own_d.size
        ds = [head_gap + own_d]
        pts = [evaluate_many(seg.curve, own_d)]
        weights = [np.ones(own_n)]

        def window_weight(nb: MapSegment) -> float:
            # a boundary window speaks with its segment's evidence: windows
            # from better-supported neighbors anchor this fit harder, while
            # windows from weaker neighbors must not drag these ends around
            return float(np.clip(nb.polyline.shape[0] / own_n, 1.0 / 30.0, 30.0))

        for nb in preds:
            span = min(delta, nb.length)
            offs = -np.arange(0.0, math.floor(span) + 0.5, SAMPLE_SPACING_M)[::-1]
            ds.append(offs)
            pts.append(evaluate_many(nb.curve, nb.length + offs))
            weights.append(np.full(offs.size, window_weight(nb)))
        for nb in succs:
            span = min(delta, nb.length)
            offs = np.arange(0.0, math.floor(span) + 0.5, SAMPLE_SPACING_M)
            ds.append(total + offs)
            pts.append(evaluate_many(nb.curve, offs))
            weights.append(np.full(offs.size, window_weight(nb)))
        all_d = np.concatenate(ds)
        all_p = np.vstack(pts)
        # short turns need extra freedom to blend both boundary windows with
        # their own arc; the inputs are smooth resamples, so no noise chasing
        degree = seg.curve.degree
        if sid.kind == "turn" and (preds or succs):
            degree = min(degree + 2, MAX_DEGREE)
        refit = fit_points(
            all_d, all_p[:, 0], all_p[:, 1], degree, weights=np.concatenate(weights)
        )
        curve = Curve2D(refit.degree, refit.coeffs_x, refit.coeffs_y, (0.0, total))
        new_segments[sid] = MapSegment.from_curve(sid, curve, total)
    return RoadMap(topology, new_segments, origin)


def build_roadmap(
    traces: Iterable[TraceInput],
    topology: GraphTopology,
    origin: GeoPoint,
    delta: float = DEFAULT_DELTA_M,
) -> RoadMap:
    """Bucket, fit and neighbor-refit in one call."""
    buckets = bucket_samples(traces, topology)
    segments = fit_segments(buckets, topology)
    return refit_with_neighbors(segments, topology, delta, origin)


def adjacency_gaps(road_map: RoadMap) -> list[tuple[SegmentId, SegmentId, float]]:
    """Terminal gaps for every consecutive segment pair present in the map."""
    gaps = []
    for sid in sorted(road_map.segments, key=lambda s: s.sort_key):
        if sid.kind != "turn":
            continue
        turn = road_map.segments[sid]
        edge_in = road_map.segments.get(SegmentId.for_edge(sid.first))
        edge_out = road_map.segments.get(SegmentId.for_edge(sid.second))
        if edge_in is not None:
            gaps.append((edge_in.id, sid, edge_in.end_point().distance_to(turn.start_point())))
        if edge_out is not None:
            gaps.append((sid, edge_out.id, turn.end_point().distance_to(edge_out.start_point())))
    return gaps


def project_point(road_map: RoadMap, p: PlanarPoint) -> ProjectionResult:
    """Nearest point on any segment polyline, by exact sub-segment projection.

    Ties keep the canonically lowest segment (edges before turns, then by
    ids) and the lowest arc distance on it.
    """
    seg_ids, d, q, dist = project_points(road_map, np.array([[p.x, p.y]]))
    return ProjectionResult(seg_ids[0], float(d[0]), PlanarPoint(q[0, 0], q[0, 1]), float(dist[0]))


def project_points(
    road_map: RoadMap, pts: np.ndarray
) -> tuple[list[SegmentId], np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`project_point` over an (n, 2) array."""
    idx = road_map.query_index()
    pts = np.ascontiguousarray(np.asarray(pts, dtype=float))
    flat, t, d2 = _kernels.project_many(
        idx.ax, idx.ay, idx.bx, idx.by, np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1])
    )
    seg_ids = [idx.order[s] for s in idx.seg_of[flat]]
    d = idx.local[flat] + t
    qx = idx.ax[flat] + t * (idx.bx[flat] - idx.ax[flat])
    qy = idx.ay[flat] + t * (idx.by[flat] - idx.ay[flat])
    return seg_ids, d, np.column_stack([qx, qy]), np.sqrt(d2)


def project_onto_segment(segment: MapSegment, p: PlanarPoint) -> ProjectionResult:
    """Projection restricted to one segment's polyline."""
    pts = segment.polyline
    if pts.shape[0] >= 2:
        a, b = pts[:-1], pts[1:]
    else:
        a = b = pts
    flat, t, d2 = _kernels.project_many(
        np.ascontiguousarray(a[:, 0]),
        np.ascontiguousarray(a[:, 1]),
        np.ascontiguousarray(b[:, 0]),
        np.ascontiguousarray(b[:, 1]),
        np.array([p.x]),
        np.array([p.y]),
    )
    i = int(flat[0])
    q = PlanarPoint(
        float(a[i, 0] + t[0] * (b[i, 0] - a[i, 0])),
        float(a[i, 1] + t[0] * (b[i, 1] - a[i, 1])),
    )
    return ProjectionResult(segment.id, float(i + t[0]), q, math.sqrt(float(d2[0])))


def rasterize_crop(
    road_map: RoadMap,
    center: PlanarPoint,
    heading: float,
    route: Optional[Sequence[SegmentId]],
    size_px: int,
) -> np.ndarray:
    """Binary crop at 1 m/pixel, centered at ``center``, heading up.

    Pixels within ``ROAD_HALF_WIDTH_M`` of an included segment polyline
    are set. ``route=None`` includes every segment; otherwise only the
    listed ones (ids absent from the map are skipped).
    """
    if size_px < 32 or size_px % 2 != 0:
        raise InvalidInputError(f"size_px must be even and >= 32, got {size_px}")
    if not math.isfinite(heading):
        raise InvalidInputError("heading must be finite")
    img = np.zeros((size_px, size_px), dtype=np.uint8)
    if route is None:
        included = sorted(road_map.segments, key=lambda s: s.sort_key)
    else:
        included = [sid for sid in sorted(set(route), key=lambda s: s.sort_key)
                    if sid in road_map.segments]
    fx, fy = math.cos(heading), math.sin(heading)
    rx, ry = fy, -fx  # image right is heading rotated -90 degrees
    half = size_px / 2.0
    hw = ROAD_HALF_WIDTH_M
    for sid in included:
        pts = road_map.segments[sid].polyline
        relx = pts[:, 0] - center.x
        rely = pts[:, 1] - center.y
        px = relx * rx + rely * ry + half
        py = half - (relx * fx + rely * fy)
        if pts.shape[0] >= 2:
            ax, ay, bx, by = px[:-1], py[:-1], px[1:], py[1:]
        else:
            ax, ay, bx, by = px, py, px, py
        keep = (
            (np.minimum(ax, bx) <= size_px + hw)
            & (np.maximum(ax, bx) >= -hw)
            & (np.minimum(ay, by) <= size_px + hw)
            & (np.maximum(ay, by) >= -hw)
        )
        if not np.any(keep):
            continue
        _kernels.stamp_band(
            img,
            np.ascontiguousarray(ax[keep]),
            np.ascontiguousarray(ay[keep]),
            np.ascontiguousarray(bx[keep]),
            np.ascontiguousarray(by[keep]),
            hw,
        )
    return img
