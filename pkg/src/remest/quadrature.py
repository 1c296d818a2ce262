"""Gaussian integration on uniform symmetric error grids.

Value functions and transmit sets in this package are sampled on a uniform
grid of estimation-error values that is symmetric about zero. A
:class:`GridFunction` represents the piecewise-linear interpolant of those
samples inside the grid, extended by a fitted quadratic on each side beyond
it. The central operation is the Gaussian expectation

    h(e) = E[f(a*e + W)],   W ~ N(0, sigma2),

computed cell by cell in closed form against the interpolation model, so the
operator is exact (up to rounding) for piecewise-linear data and for the
quadratic tails. Sampled quadratics pick up only the interpolation bias of
the model, about ``spacing**2 / 6`` in absolute terms, which cancels in
difference quotients.

The module also provides truncated-normal moments and the shape checkers
(symmetry, monotonicity in |e|, directional difference quotients) used to
validate solver output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr

_SQRT2PI = math.sqrt(2.0 * math.pi)

# Probability mass below this is treated as an empty interval.
MASS_FLOOR = 1e-300


class DegenerateIntervalError(ValueError):
    """An integration interval carries no usable probability mass."""


def _std_pdf(z):
    """Standard normal density, with 0 at infinite arguments."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    finite = np.isfinite(z)
    out[finite] = np.exp(-0.5 * z[finite] ** 2) / _SQRT2PI
    return out


def gaussian_partial_moments(sigma2, lo, hi):
    """Unnormalized moments of N(0, sigma2) restricted to [lo, hi].

    Returns ``(M0, M1, M2)`` with ``Mk = integral of x^k * pdf(x)`` over the
    interval. Either endpoint may be infinite. Safe for intervals of zero
    mass (all three values underflow to 0 together).
    """
    sigma = math.sqrt(sigma2)
    za = -math.inf if lo == -math.inf else lo / sigma
    zb = math.inf if hi == math.inf else hi / sigma
    za_a, zb_a = np.asarray(za), np.asarray(zb)
    pa, pb = _std_pdf(za_a)[()], _std_pdf(zb_a)[()]
    # Evaluate the CDF difference on the side with less cancellation.
    if za > 0:
        m0 = float(ndtr(-za) - ndtr(-zb))
    else:
        m0 = float(ndtr(zb) - ndtr(za))
    zpa = za * pa if math.isfinite(za) else 0.0
    zpb = zb * pb if math.isfinite(zb) else 0.0
    m1 = sigma * (pa - pb)
    m2 = sigma2 * (m0 + zpa - zpb)
    return m0, m1, m2


def truncated_moments(sigma2, lo, hi):
    """Conditional moments of X ~ N(0, sigma2) given X in [lo, hi].

    Parameters
    ----------
    sigma2 : float
        Variance, must be positive.
    lo, hi : float
        Interval endpoints, ``lo < hi``; either may be infinite.

    Returns
    -------
    (mass, mean, second_moment) : tuple of float
        ``P(X in [lo, hi])``, ``E[X | X in [lo, hi]]`` and
        ``E[X**2 | X in [lo, hi]]``.

    Raises
    ------
    DegenerateIntervalError
        If the interval mass underflows below ``MASS_FLOOR``; the
        conditional moments are undefined there.
    """
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    m0, m1, m2 = gaussian_partial_moments(sigma2, lo, hi)
    if m0 < MASS_FLOOR:
        raise DegenerateIntervalError(
            f"interval [{lo}, {hi}] has mass {m0!r} below {MASS_FLOOR!r}")
    return m0, m1 / m0, m2 / m0


@dataclass(frozen=True)
class ErrorGrid:
    """Uniform symmetric grid on [-half_width, half_width].

    ``num_points`` must be odd so that 0 is a grid point. Points are stored
    exactly antisymmetric (``points[i] == -points[-i-1]`` bitwise).
    """

    half_width: float
    num_points: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        if self.num_points < 3 or self.num_points % 2 == 0:
            raise ValueError(f"num_points must be odd and >= 3, got {self.num_points}")
        pts = np.linspace(-self.half_width, self.half_width, self.num_points)
        pts = 0.5 * (pts - pts[::-1])  # force exact antisymmetry, 0 at center
        pts.flags.writeable = False
        object.__setattr__(self, "_points", pts)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.num_points - 1)

    @property
    def center_index(self) -> int:
        return self.num_points // 2

    @classmethod
    def auto(cls, a, sigma2, horizon, num_points=2001, max_half_width=100.0):
        """Grid sized for a horizon of Gaussian propagation steps.

        Width ``8 * sigma * max(1, |a|)**horizon`` covers the mass a gain-a
        recursion can spread over the horizon, clipped to ``max_half_width``
        to keep capped growth detectable by the solver's value cap instead
        of silently extrapolating.
        """
        sigma = math.sqrt(sigma2)
        hw = 8.0 * sigma * max(1.0, abs(a)) ** horizon
        return cls(min(hw, max_half_width), num_points)

    def index_of(self, e: float) -> int:
        """Index of the grid point equal to e (raises if e is off-grid)."""
        i = int(round((e + self.half_width) / self.spacing))
        if i < 0 or i >= self.num_points or abs(self._points[i] - e) > 1e-9 * max(1.0, abs(e)):
            raise ValueError(f"{e} is not a grid point of {self}")
        return i

    def nearest_index(self, e) -> np.ndarray:
        """Nearest grid index for arbitrary (vectorized) error values."""
        idx = np.rint((np.asarray(e, dtype=float) + self.half_width) / self.spacing)
        return np.clip(idx, 0, self.num_points - 1).astype(np.intp)


def _fit_tail(x, v):
    # quadratic least squares on the outer band; exact for quadratic data
    return np.polyfit(x, v, 2)


@dataclass(frozen=True)
class GridFunction:
    """Function sampled on an ErrorGrid with quadratic tail extrapolation.

    ``values[i]`` is the function value at ``grid.points[i]``. Inside the
    grid the function is the piecewise-linear interpolant; beyond each end
    it is the quadratic fitted to the outer ``TAIL_FRACTION`` of points on
    that side (``tail_left`` / ``tail_right`` in ``np.polyval`` order).
    """

    TAIL_FRACTION = 0.1

    grid: ErrorGrid
    values: np.ndarray
    tail_left: np.ndarray = field(repr=False, default=None)
    tail_right: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.num_points,):
            raise ValueError(
                f"values shape {v.shape} does not match grid ({self.grid.num_points},)")
        object.__setattr__(self, "values", v)
        if self.tail_left is None or self.tail_right is None:
            k = max(3, int(self.grid.num_points * self.TAIL_FRACTION))
            x = self.grid.points
            object.__setattr__(self, "tail_left", _fit_tail(x[:k], v[:k]))
            object.__setattr__(self, "tail_right", _fit_tail(x[-k:], v[-k:]))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.grid.points, self.values)
        hw = self.grid.half_width
        right = x > hw
        left = x < -hw
        if np.any(right):
            out = np.where(right, np.polyval(self.tail_right, x), out)
        if np.any(left):
            out = np.where(left, np.polyval(self.tail_left, x), out)
        return out[()] if out.ndim == 0 else out


class GaussianExpectationOperator:
    """Precomputed linear map of grid functions f to h(e) = E[f(a*e + W)].

    Row i integrates the interpolation model of f against the normal density
    centered at ``a * points[i]``: closed-form cell integrals inside the
    grid plus analytic integrals of the quadratic tails beyond it. Build
    cost is O(n^2) and one application is a matrix-vector product, so the
    operator should be reused across stages and channel states.
    """

    def __init__(self, grid: ErrorGrid, a: float, sigma2: float, chunk: int = 256):
        if not sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        self.grid = grid
        self.a = float(a)
        self.sigma2 = float(sigma2)
        sigma = math.sqrt(sigma2)
        xs = grid.points
        n = grid.num_points
        dx = grid.spacing
        centers = self.a * xs
        weights = np.zeros((n, n))
        for start in range(0, n, chunk):
            c = centers[start:start + chunk, None]
            z = (xs[None, :] - c) / sigma
            cdf = ndtr(z)
            dens = np.exp(-0.5 * z * z) / (_SQRT2PI * sigma)
            p0 = cdf[:, 1:] - cdf[:, :-1]
            # integral of (u - c) * pdf over each cell
            t = sigma2 * (dens[:, :-1] - dens[:, 1:])
            p1 = c * p0 + t
            wa = (xs[None, 1:] * p0 - p1) / dx
            wb = (p1 - xs[None, :-1] * p0) / dx
            block = weights[start:start + chunk]
            block[:, :-1] += wa
            block[:, 1:] += wb
        self._weights = weights
        # analytic moments of the density mass beyond each grid end
        hw = grid.half_width
        zr = (hw - centers) / sigma
        sr = ndtr(-zr)
        pr = _std_pdf(zr)
        self._t_right = np.stack([
            (centers ** 2 + sigma2) * sr + sigma * pr * (hw + centers),
            centers * sr + sigma * pr,
            sr,
        ])
        zl = (-hw - centers) / sigma
        sl = ndtr(zl)
        pl = _std_pdf(zl)
        self._t_left = np.stack([
            (centers ** 2 + sigma2) * sl - sigma * pl * (centers - hw),
            centers * sl - sigma * pl,
            sl,
        ])

    def apply(self, f: GridFunction) -> GridFunction:
        if f.grid is not self.grid and (
                f.grid.num_points != self.grid.num_points
                or f.grid.half_width != self.grid.half_width):
            raise ValueError("grid mismatch between operator and function")
        v = self._weights @ f.values
        v += f.tail_right @ self._t_right
        v += f.tail_left @ self._t_left
        return GridFunction(self.grid, v)

    def expectation_of_noise(self, f: GridFunction) -> float:
        """E[f(W)], the row of the operator centered at e = 0."""
        return float(self.apply_values_at_center(f))

    def apply_values_at_center(self, f: GridFunction) -> float:
        c = self.grid.center_index
        v = self._weights[c] @ f.values
        v += f.tail_right @ self._t_right[:, c]
        v += f.tail_left @ self._t_left[:, c]
        return v


def gaussian_expectation(f: GridFunction, a: float, sigma2: float) -> GridFunction:
    """One-shot h(e) = E[f(a*e + W)], W ~ N(0, sigma2), on f's grid.

    Builds a fresh operator; reuse :class:`GaussianExpectationOperator`
    directly when applying to many functions on the same grid.
    """
    return GaussianExpectationOperator(f.grid, a, sigma2).apply(f)


class ShapeViolation(NamedTuple):
    kind: str  # "asymmetry" or "decrease"
    e: float
    magnitude: float


def is_symmetric_nondecreasing(f: GridFunction, tol: float):
    """Check that f is symmetric and non-decreasing in |e|, up to tol.

    Returns ``(ok, violation)`` where ``violation`` is the first
    :class:`ShapeViolation` found scanning outward from the center
    (symmetry first, then monotonicity on each half), or None.
    """
    v = f.values
    x = f.grid.points
    c = f.grid.center_index
    for i in range(1, c + 1):
        d = v[c + i] - v[c - i]
        if abs(d) > tol:
            return False, ShapeViolation("asymmetry", x[c + i], abs(d))
    for i in range(c, f.grid.num_points - 1):
        drop = v[i] - v[i + 1]
        if drop > tol:
            return False, ShapeViolation("decrease", x[i + 1], drop)
    for i in range(c, 0, -1):
        drop = v[i] - v[i - 1]
        if drop > tol:
            return False, ShapeViolation("decrease", x[i - 1], drop)
    return True, None


def directional_difference_quotient(f: GridFunction, e: float) -> float:
    """Forward difference of f with respect to e**2 at grid point e >= 0.

    Surrogate for the one-sided derivative d f / d(e^2): with D the grid
    spacing, returns ``(f(e+D) - f(e)) / ((e+D)**2 - e**2)``.
    """
    if e < -1e-12:
        raise ValueError(f"e must be nonnegative, got {e}")
    i = f.grid.index_of(max(e, 0.0))
    if i + 1 >= f.grid.num_points:
        raise ValueError(f"e + spacing falls outside the grid at e={e}")
    x = f.grid.points
    return (f.values[i + 1] - f.values[i]) / (x[i + 1] ** 2 - x[i] ** 2)
