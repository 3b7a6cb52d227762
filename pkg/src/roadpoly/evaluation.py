"""Evaluation machinery: mask decoding, pose metrics, control MAE, directions.

Everything here is a pure read-only computation over immutable inputs, so
samples can be processed in parallel; reductions use numpy's fixed-order
sums for reproducible floating-point results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError, UndefinedMetricsError
from .geo import PlanarPoint
from .roadmap import RoadMap, SegmentId, project_onto_segment
from .routing import Route
from .trajectory import (
    TRAJECTORY_POINTS,
    ControlCommand,
    Pose,
    Trajectory,
    ego_to_map,
    wrap_degrees,
)

DOT_RADIUS_PX = 15.0
DOT_AREA_MIN_RATIO = 0.25
DOT_AREA_MAX_RATIO = 1.75
# Points whose nearest candidate segment is farther than this are clearly
# off the road and excluded from direction accuracy.
OFF_ROAD_DIST_M = 15.0

_EIGHT_CONN = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class MaskImage:
    """A binary mask in a metric frame; pixel (x, y) maps to
    frame_origin + (x, y) * meters_per_pixel."""

    pixels: np.ndarray  # (height, width), values 0/1
    meters_per_pixel: float
    frame_origin: PlanarPoint
    dot_radius_px: float = DOT_RADIUS_PX

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidInputError(f"mask must be 2D, got shape {px.shape}")
        if not np.isin(px, (0, 1)).all():
            raise InvalidInputError("mask pixels must be strictly binary")
        if not self.meters_per_pixel > 0:
            raise InvalidInputError("meters_per_pixel must be positive")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class PoseMetrics:
    response_rate: float
    mean_err: float
    median_err: float


@dataclass(frozen=True)
class DirectionReport:
    """Per-horizon-second direction accuracy at intersections.

    ``per_second_accuracy[n]`` is None where ``counted[n]`` is zero.
    """

    per_second_accuracy: tuple[Optional[float], ...]
    counted: tuple[int, ...]
    correct: tuple[int, ...]


def _largest_component_centroid(mask: np.ndarray) -> Optional[tuple[float, float, int]]:
    """Centroid (x, y in pixels) and area of the largest 8-connected component."""
    labels, n = ndimage.label(mask, structure=_EIGHT_CONN)
    if n == 0:
        return None
    areas = np.bincount(labels.ravel())[1:]
    best = int(np.argmax(areas)) + 1  # first-largest wins ties
    rows, cols = np.nonzero(labels == best)
    return float(cols.mean()), float(rows.mean()), int(areas[best - 1])


def decode_pose_from_masks(
    position_mask: MaskImage, orientation_mask: MaskImage
) -> Optional[Pose]:
    """Decode position and heading from a dot mask and a half-dot mask.

    The largest connected component of the position mask is the dot; its
    area must be within the accepted band around a perfect dot or there is
    no response. The heading is the direction from the dot center to the
    half-dot center on the orientation mask; with an empty orientation
    mask a position-only pose (heading None) is returned.
    """
    if position_mask.pixels.shape != orientation_mask.pixels.shape:
        raise InvalidInputError(
            f"mask shapes differ: {position_mask.pixels.shape} vs "
            f"{orientation_mask.pixels.shape}"
        )
    if (
        position_mask.meters_per_pixel != orientation_mask.meters_per_pixel
        or position_mask.frame_origin != orientation_mask.frame_origin
    ):
        raise InvalidInputError("masks must share one metric frame")
    hit = _largest_component_centroid(position_mask.pixels)
    if hit is None:
        return None
    cx, cy, area = hit
    perfect = math.pi * position_mask.dot_radius_px**2
    if not DOT_AREA_MIN_RATIO * perfect <= area <= DOT_AREA_MAX_RATIO * perfect:
        return None
    mpp = position_mask.meters_per_pixel
    origin = position_mask.frame_origin
    pos = PlanarPoint(origin.x + cx * mpp, origin.y + cy * mpp)
    ori = _largest_component_centroid(orientation_mask.pixels)
    if ori is None:
        return Pose(0.0, pos, None)
    ox, oy, _ = ori
    heading = math.atan2((oy - cy) * mpp, (ox - cx) * mpp)
    return Pose(0.0, pos, heading)


def pose_metrics(
    preds: Sequence[Optional[Pose]], truths: Sequence[Pose]
) -> tuple[PoseMetrics, PoseMetrics]:
    """Response rates plus mean/median errors for position and orientation.

    Errors are computed over responding samples only: position error in
    meters, orientation error as the absolute wrapped difference in
    degrees. With no responders the error statistics are NaN.
    """
    if len(preds) != len(truths):
        raise InvalidInputError(f"{len(preds)} predictions vs {len(truths)} truths")
    if not preds:
        raise UndefinedMetricsError("no samples to evaluate")
    pos_err = []
    ori_err = []
    n_pos = 0
    n_ori = 0
    for pred, truth in zip(preds, truths):
        if pred is None:
            continue
        n_pos += 1
        pos_err.append(pred.p.distance_to(truth.p))
        if pred.heading is None or truth.heading is None:
            continue
        n_ori += 1
        ori_err.append(abs(wrap_degrees(math.degrees(pred.heading - truth.heading))))

    def stats(count: int, errs: list[float]) -> PoseMetrics:
        rate = count / len(preds)
        if not errs:
            return PoseMetrics(rate, math.nan, math.nan)
        arr = np.array(errs)
        return PoseMetrics(rate, float(arr.mean()), float(np.median(arr)))

    return stats(n_pos, pos_err), stats(n_ori, ori_err)


@dataclass(frozen=True)
class ControlMaeTable:
    """Mean absolute errors per horizon second, for speed and angle."""

    speed: tuple[float, ...]
    angle: tuple[float, ...]


def control_mae(
    pred_controls: Sequence[Sequence[ControlCommand]],
    truth_controls: Sequence[Sequence[ControlCommand]],
) -> ControlMaeTable:
    """MAE tables over aligned 7-command sets."""
    if len(pred_controls) != len(truth_controls):
        raise InvalidInputError(
            f"{len(pred_controls)} predictions vs {len(truth_controls)} truths"
        )
    if not pred_controls:
        raise UndefinedMetricsError("no control samples to evaluate")
    speed_err = np.zeros(TRAJECTORY_POINTS)
    angle_err = np.zeros(TRAJECTORY_POINTS)
    for pred, truth in zip(pred_controls, truth_controls):
        if len(pred) != TRAJECTORY_POINTS or len(truth) != TRAJECTORY_POINTS:
            raise InvalidInputError("every sample needs exactly 7 commands")
        for n in range(TRAJECTORY_POINTS):
            speed_err[n] += abs(pred[n].speed - truth[n].speed)
            angle_err[n] += abs(wrap_degrees(pred[n].steering_angle - truth[n].steering_angle))
    m = len(pred_controls)
    return ControlMaeTable(tuple(speed_err / m), tuple(angle_err / m))


def _on_route(sid: SegmentId, route: Route) -> bool:
    if sid.kind == "edge":
        return sid.first in route.edges
    return any(
        a == sid.first and b == sid.second
        for a, b in zip(route.edges, route.edges[1:])
    )


def direction_accuracy(
    preds: Sequence[tuple[Pose, Trajectory]],
    truth_routes: Sequence[Route],
    road_map: RoadMap,
) -> DirectionReport:
    """How often predicted points inside intersections pick the correct branch.

    Each trajectory point is mapped to the map frame through its sample's
    pose. A point counts at its horizon second when it falls inside a node
    where the route's approach offers a real choice (at least two distinct
    outgoing edges) and is not clearly off the road. The competing
    candidates are the ways of leaving the intersection from the route's
    incoming edge (its turn segments plus their outgoing edges); turns
    belonging to other approaches share the same pavement and are not
    alternatives the vehicle could take. A point is correct when the
    nearest candidate lies on the sample's true route.
    """
    if len(preds) != len(truth_routes):
        raise InvalidInputError(f"{len(preds)} samples vs {len(truth_routes)} routes")
    counted = [0] * TRAJECTORY_POINTS
    correct = [0] * TRAJECTORY_POINTS
    for (pose, traj), route in zip(preds, truth_routes):
        pts = ego_to_map(pose, traj.points)
        for n in range(TRAJECTORY_POINTS):
            p = PlanarPoint(float(pts[n, 0]), float(pts[n, 1]))
            node = road_map.topology.node_containing(p)
            if node is None:
                continue
            turns = road_map.turns_at_node(node.id)
            in_edges = {
                e for e in route.edges
                if road_map.topology.edge_by_id[e].to_node == node.id
            }
            approach = [sid for sid in turns if sid.first in in_edges]
            if approach:
                turns = approach
            out_edges = sorted({sid.second for sid in turns})
            if len(out_edges) < 2:
                continue
            candidates = turns + [
                SegmentId.for_edge(e) for e in out_edges
                if SegmentId.for_edge(e) in road_map.segments
            ]
            best_sid = None
            best_dist = math.inf
            for sid in sorted(candidates, key=lambda s: s.sort_key):
                proj = project_onto_segment(road_map.segments[sid], p)
                if proj.dist < best_dist:
                    best_sid, best_dist = sid, proj.dist
            if best_sid is None or best_dist > OFF_ROAD_DIST_M:
                continue
            counted[n] += 1
            if _on_route(best_sid, route):
                correct[n] += 1
    accuracy = tuple(
        (correct[n] / counted[n]) if counted[n] > 0 else None
        for n in range(TRAJECTORY_POINTS)
    )
    return DirectionReport(accuracy, tuple(counted), tuple(correct))
