"""Trajectory math: ground-truth extraction, loss, controls, pose smoothing.

A trajectory is seven planar points at one-second spacing in the ego
frame: origin at the vehicle's current position, +y along its heading,
+x to its right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    HeadingUndefinedError,
    InvalidInputError,
    WindowTooSparseError,
)
from .geo import PlanarPoint, TimedSample
from .polyfit import Curve2D, derivative_at, evaluate_many, fit_points

TRAJECTORY_POINTS = 7
# Below this speed a heading cannot be read off the motion.
STANDSTILL_SPEED_MPS = 0.5
# Interval displacements below this carry the previous steering angle.
STANDSTILL_DISP_M = 0.05
GROUND_TRUTH_DEGREE = 3
GROUND_TRUTH_WINDOW_S = 2.0
SMOOTH_WINDOW_S = 2.0
SMOOTH_DEGREE = 2


def normalize_angle(a: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    r = math.fmod(a, 2.0 * math.pi)
    if r <= -math.pi:
        r += 2.0 * math.pi
    elif r > math.pi:
        r -= 2.0 * math.pi
    return r


def wrap_degrees(a: float) -> float:
    """Wrap an angle in degrees to (-180, 180]."""
    r = math.fmod(a, 360.0)
    if r <= -180.0:
        r += 360.0
    elif r > 180.0:
        r -= 360.0
    return r


@dataclass(frozen=True)
class Pose:
    """Planar position plus heading (radians CCW from +x east), timestamped.

    ``heading`` may be None when a prediction carries a position but no
    usable orientation.
    """

    t: float
    p: PlanarPoint
    heading: Optional[float]

    def __post_init__(self):
        if self.heading is not None:
            if not math.isfinite(self.heading):
                raise InvalidInputError("non-finite heading")
            object.__setattr__(self, "heading", normalize_angle(self.heading))


class Trajectory:
    """Exactly seven ego-frame points at t = 1..7 s."""

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=float)
        if pts.shape != (TRAJECTORY_POINTS, 2):
            raise InvalidInputError(f"trajectory must be (7, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("non-finite trajectory point")
        pts = pts.copy()
        pts.setflags(write=False)
        self.points = pts

    def __eq__(self, other) -> bool:
        return isinstance(other, Trajectory) and np.array_equal(self.points, other.points)

    def __repr__(self) -> str:
        return f"Trajectory({self.points.tolist()})"


@dataclass(frozen=True)
class ControlCommand:
    """Average speed and heading change over one 1 s interval."""

    interval_index: int  # 1..7
    speed: float  # m/s
    steering_angle: float  # degrees, CCW positive, wrapped to (-180, 180]

    def __post_init__(self):
        if not 1 <= self.interval_index <= TRAJECTORY_POINTS:
            raise InvalidInputError(f"interval_index out of range: {self.interval_index}")
        if self.speed < 0:
            raise InvalidInputError(f"negative speed: {self.speed}")


def ego_axes(heading: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit forward (+y of ego) and right (+x of ego) axes in map frame."""
    forward = np.array([math.cos(heading), math.sin(heading)])
    right = np.array([math.sin(heading), -math.cos(heading)])
    return forward, right


def map_to_ego(pose: Pose, pts: np.ndarray) -> np.ndarray:
    """Transform (n, 2) map-frame points into the pose's ego frame."""
    if pose.heading is None:
        raise InvalidInputError("pose has no heading; ego frame undefined")
    forward, right = ego_axes(pose.heading)
    rel = np.asarray(pts, dtype=float) - np.array([pose.p.x, pose.p.y])
    return np.column_stack([rel @ right, rel @ forward])


def ego_to_map(pose: Pose, pts: np.ndarray) -> np.ndarray:
    """Transform (n, 2) ego-frame points into the map frame."""
    if pose.heading is None:
        raise InvalidInputError("pose has no heading; ego frame undefined")
    forward, right = ego_axes(pose.heading)
    pts = np.asarray(pts, dtype=float)
    return (
        np.array([pose.p.x, pose.p.y])
        + pts[:, [0]] * right
        + pts[:, [1]] * forward
    )


def trajectory_loss(pred: Trajectory, truth: Trajectory) -> float:
    """Mean Euclidean distance over the seven point pairs."""
    return float(np.mean(np.linalg.norm(pred.points - truth.points, axis=1)))


def ground_truth_sample(
    trace: Sequence[TimedSample],
    t0: float,
    fit_window: float = GROUND_TRUTH_WINDOW_S,
    degree: int = GROUND_TRUTH_DEGREE,
) -> tuple[Pose, Trajectory]:
    """Extract the true pose and future trajectory at ``t0`` from a trace.

    Fits a time polynomial over [t0 - w/2, t0 + 7 + w/2], reads the pose
    at t0 off the curve (position and tangent), and expresses the curve at
    t0 + 1..7 in that ego frame.
    """
    lo = t0 - fit_window / 2.0
    hi = t0 + TRAJECTORY_POINTS + fit_window / 2.0
    window = [s for s in trace if lo <= s.t <= hi]
    if len(window) < degree + 1:
        raise WindowTooSparseError(
            f"{len(window)} samples in [{lo:.2f}, {hi:.2f}], need {degree + 1}"
        )
    ts = np.array([s.t for s in window])
    if ts.min() > t0 or ts.max() < t0 + TRAJECTORY_POINTS:
        raise WindowTooSparseError(
            f"trace covers [{ts.min():.2f}, {ts.max():.2f}], "
            f"need [{t0:.2f}, {t0 + TRAJECTORY_POINTS:.2f}]"
        )
    curve = fit_points(
        ts, np.array([s.p.x for s in window]), np.array([s.p.y for s in window]), degree
    )
    pose = curve_pose_at(curve, t0)
    future = evaluate_many(curve, t0 + np.arange(1.0, TRAJECTORY_POINTS + 0.5))
    return pose, Trajectory(map_to_ego(pose, future))


def ground_truth_trajectory(
    trace: Sequence[TimedSample],
    t0: float,
    fit_window: float = GROUND_TRUTH_WINDOW_S,
    degree: int = GROUND_TRUTH_DEGREE,
) -> Trajectory:
    """The trajectory half of :func:`ground_truth_sample`."""
    return ground_truth_sample(trace, t0, fit_window, degree)[1]


def curve_pose_at(curve: Curve2D, t: float) -> Pose:
    """Pose read off a time curve: position plus tangent heading."""
    dx, dy = derivative_at(curve, t)
    speed = math.hypot(dx, dy)
    if speed < STANDSTILL_SPEED_MPS:
        raise HeadingUndefinedError(
            f"speed {speed:.3f} m/s at t={t:.2f} is below {STANDSTILL_SPEED_MPS}"
        )
    pts = evaluate_many(curve, np.array([t]))
    return Pose(t, PlanarPoint(float(pts[0, 0]), float(pts[0, 1])), math.atan2(dy, dx))


def derive_controls(traj: Trajectory) -> list[ControlCommand]:
    """Per-second speed and heading change derived from the trajectory chords.

    The chord before the first point starts at the ego origin, and the
    reference heading for the first interval is the ego +y axis, so 0
    degrees means straight ahead. Intervals too short to define a
    direction carry the previous steering angle.
    """
    pts = np.vstack([[0.0, 0.0], traj.points])
    commands: list[ControlCommand] = []
    prev_heading = math.pi / 2.0  # ego forward
    prev_angle = 0.0
    for n in range(1, TRAJECTORY_POINTS + 1):
        disp = pts[n] - pts[n - 1]
        dist = float(math.hypot(disp[0], disp[1]))
        if dist < STANDSTILL_DISP_M:
            commands.append(ControlCommand(n, dist, prev_angle))
            continue
        heading = math.atan2(disp[1], disp[0])
        angle = wrap_degrees(math.degrees(heading - prev_heading))
        commands.append(ControlCommand(n, dist, angle))
        prev_heading = heading
        prev_angle = angle
    return commands


def integrate_controls(commands: Sequence[ControlCommand]) -> np.ndarray:
    """Dead-reckon the seven commands back into ego-frame points."""
    if len(commands) != TRAJECTORY_POINTS:
        raise InvalidInputError(f"need exactly {TRAJECTORY_POINTS} commands")
    heading = math.pi / 2.0
    pos = np.zeros(2)
    out = np.zeros((TRAJECTORY_POINTS, 2))
    for i, cmd in enumerate(commands):
        heading = heading + math.radians(cmd.steering_angle)
        pos = pos + cmd.speed * np.array([math.cos(heading), math.sin(heading)])
        out[i] = pos
    return out


def smooth_poses(
    poses: Sequence[Pose],
    window: float = SMOOTH_WINDOW_S,
    degree: int = SMOOTH_DEGREE,
) -> list[Pose]:
    """Replace each pose with a local time-polynomial fit of its neighbors.

    Windows with fewer than degree + 1 poses pass the pose through
    unchanged; endpoint windows are naturally one-sided. Headings are
    re-read from the fitted tangent unless the local speed is below the
    standstill threshold, in which case the input heading is kept.
    """
    if window <= 0:
        raise InvalidInputError(f"window must be positive, got {window}")
    ts = np.array([p.t for p in poses])
    xs = np.array([p.p.x for p in poses])
    ys = np.array([p.p.y for p in poses])
    out: list[Pose] = []
    for i, pose in enumerate(poses):
        sel = np.abs(ts - pose.t) <= window / 2.0
        if int(sel.sum()) < degree + 1:
            out.append(pose)
            continue
        curve = fit_points(ts[sel], xs[sel], ys[sel], degree)
        pts = evaluate_many(curve, np.array([pose.t]))
        dx, dy = derivative_at(curve, pose.t)
        if math.hypot(dx, dy) >= STANDSTILL_SPEED_MPS:
            heading: Optional[float] = math.atan2(dy, dx)
        else:
            heading = pose.heading
        out.append(Pose(pose.t, PlanarPoint(float(pts[0, 0]), float(pts[0, 1])), heading))
    return out
