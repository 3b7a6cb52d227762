"""Analytical polynomial road maps from GPS traces.

Builds a smooth analytical map (polynomial curves over arc distance) from
timestamped traces on a known intersection graph, plans coverage drives,
rasterizes map crops, extracts trajectory ground truth, derives control
commands, and computes the associated evaluation metrics.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .errors import (
    CoverageImpossibleError,
    DataError,
    HeadingUndefinedError,
    IllConditionedError,
    InsufficientDataError,
    InvalidInputError,
    NoRouteError,
    NumericalError,
    ParseError,
    RoadPolyError,
    RouteMismatchError,
    TraceCorruptError,
    UnderdeterminedError,
    UndefinedMetricsError,
    WindowTooSparseError,
)
from .geo import EARTH_RADIUS_M, GeoPoint, PlanarPoint, TimedSample, to_geodetic, to_planar
from .polyfit import Curve2D, derivative_at, evaluate, fit_curve, fit_points, sample_uniform
from .roadmap import (
    Edge,
    GraphTopology,
    MapSegment,
    Node,
    RoadMap,
    SegmentId,
    adjacency_gaps,
    bucket_samples,
    build_roadmap,
    fit_segments,
    project_point,
    rasterize_crop,
    refit_with_neighbors,
)
from .routing import Route, RoutePlan, pair_edge_counts, shortest_route, simulate_coverage
from .trajectory import (
    ControlCommand,
    Pose,
    Trajectory,
    derive_controls,
    ground_truth_trajectory,
    smooth_poses,
    trajectory_loss,
)
from .evaluation import (
    ControlMaeTable,
    DirectionReport,
    MaskImage,
    PoseMetrics,
    control_mae,
    decode_pose_from_masks,
    direction_accuracy,
    pose_metrics,
)

__version__ = "0.1.0"
