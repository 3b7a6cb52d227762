"""2D polynomial curves over a scalar parameter, fitted by linear least squares.

A curve is a pair of same-degree polynomials x(s), y(s); the parameter is
time for trajectories and arc distance for map segments. x and y are
fitted independently. Parameters are shifted to their midpoint and scaled
to [-1, 1] before solving (raw normal equations over long segments are
catastrophically ill-conditioned); the returned coefficients are mapped
back to the original parameter units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .errors import IllConditionedError, InvalidInputError, UnderdeterminedError
from .geo import PlanarPoint, TimedSample

# Condition-number estimate above which a fit is reported ill-conditioned.
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class Curve2D:
    """Two polynomials of one parameter, coefficients highest power first."""

    degree: int
    coeffs_x: tuple[float, ...]
    coeffs_y: tuple[float, ...]
    param_range: tuple[float, float]

    def __post_init__(self):
        if self.degree < 0:
            raise InvalidInputError(f"negative degree: {self.degree}")
        n = self.degree + 1
        if len(self.coeffs_x) != n or len(self.coeffs_y) != n:
            raise InvalidInputError("coefficient count must equal degree + 1")
        if not all(math.isfinite(c) for c in self.coeffs_x + self.coeffs_y):
            raise InvalidInputError("non-finite coefficient")
        lo, hi = self.param_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise InvalidInputError(f"bad param_range: {self.param_range}")

    def covers(self, s: float) -> bool:
        """True when ``s`` lies inside the fitted parameter range.

        Evaluation outside the range is permitted (the neighbor-aware
        refit relies on it) but is extrapolation; use this predicate to
        detect it.
        """
        return self.param_range[0] <= s <= self.param_range[1]


def _scaled_solve(
    u: np.ndarray, values: np.ndarray, degree: int, root_w: np.ndarray | None = None
) -> np.ndarray:
    """Least squares on the [-1, 1]-scaled Vandermonde, highest power first."""
    vander = np.vander(u, degree + 1)
    if root_w is not None:
        vander = vander * root_w[:, None]
        values = values * root_w
    coef, _, _, sv = np.linalg.lstsq(vander, values, rcond=None)
    if sv[-1] <= 0 or not np.isfinite(sv[0] / sv[-1]) or sv[0] / sv[-1] > CONDITION_LIMIT:
        raise IllConditionedError(
            f"condition estimate {sv[0] / max(sv[-1], 1e-300):.2e} exceeds "
            f"{CONDITION_LIMIT:.0e}"
        )
    return coef


def fit_points(
    params: np.ndarray,
    xs: np.ndarray,
    ys: np.ndarray,
    degree: int,
    weights: np.ndarray | None = None,
) -> Curve2D:
    """Fit x(s) and y(s) of the given degree to raw sample arrays.

    Optional per-sample weights turn the solve into weighted least squares.
    """
    params = np.asarray(params, dtype=float)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if degree < 0:
        raise InvalidInputError(f"negative degree: {degree}")
    n = params.size
    if n != xs.size or n != ys.size:
        raise InvalidInputError("params, xs, ys must have equal length")
    if n < degree + 1:
        raise UnderdeterminedError(f"{n} samples cannot determine degree {degree}")
    if not (np.all(np.isfinite(params)) and np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise InvalidInputError("non-finite sample")
    root_w = None
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.size != n or np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise InvalidInputError("weights must be positive, finite, one per sample")
        root_w = np.sqrt(weights)
    lo = float(params.min())
    hi = float(params.max())
    if hi == lo:
        raise IllConditionedError("all sample parameters identical")
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    u = (params - mid) / half
    cx = _scaled_solve(u, xs, degree, root_w)
    cy = _scaled_solve(u, ys, degree, root_w)

    def unscale(coef_hi_first: np.ndarray) -> tuple[float, ...]:
        p = Polynomial(coef_hi_first[::-1], domain=[lo, hi], window=[-1.0, 1.0]).convert()
        out = np.zeros(degree + 1)
        out[: p.coef.size] = p.coef
        return tuple(out[::-1])

    return Curve2D(degree, unscale(cx), unscale(cy), (lo, hi))


def fit_curve(samples: Sequence[TimedSample], degree: int) -> Curve2D:
    """Fit a curve to timed samples; the parameter is the sample time."""
    params = np.array([s.t for s in samples])
    xs = np.array([s.p.x for s in samples])
    ys = np.array([s.p.y for s in samples])
    return fit_points(params, xs, ys, degree)


def evaluate(c: Curve2D, s: float) -> PlanarPoint:
    """Horner evaluation of both polynomials at ``s``.

    Values outside ``c.param_range`` are extrapolations; callers that care
    should check ``c.covers(s)``.
    """
    return PlanarPoint(float(np.polyval(c.coeffs_x, s)), float(np.polyval(c.coeffs_y, s)))


def evaluate_many(c: Curve2D, s: np.ndarray) -> np.ndarray:
    """Vectorized :func:`evaluate`; returns an (n, 2) array."""
    s = np.asarray(s, dtype=float)
    return np.column_stack([np.polyval(c.coeffs_x, s), np.polyval(c.coeffs_y, s)])


def _derivative_coeffs(coeffs: tuple[float, ...]) -> np.ndarray:
    d = len(coeffs) - 1
    if d == 0:
        return np.zeros(1)
    return np.asarray(coeffs[:-1]) * np.arange(d, 0, -1)


def derivative_at(c: Curve2D, s: float) -> tuple[float, float]:
    """Exact analytic derivative (dx/ds, dy/ds) at ``s``."""
    return (
        float(np.polyval(_derivative_coeffs(c.coeffs_x), s)),
        float(np.polyval(_derivative_coeffs(c.coeffs_y), s)),
    )


def sample_uniform(c: Curve2D, s0: float, s1: float, n: int) -> np.ndarray:
    """``n`` points at equally spaced parameters from s0 to s1, as an (n, 2) array."""
    if n < 2:
        raise InvalidInputError(f"need n >= 2, got {n}")
    if not s0 < s1:
        raise InvalidInputError(f"need s0 < s1, got [{s0}, {s1}]")
    return evaluate_many(c, np.linspace(s0, s1, n))
