"""Least-squares B-spline fitting with information-criterion knot selection.

Fits clamped B-splines of a fixed degree on uniformly placed interior
knots, trying a list of candidate knot counts and keeping the one with the
lowest Bayesian Information Criterion.  Ties break toward fewer knots so
the selected model is the lowest-parametric one that explains the data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline as _ScipyBSpline


@dataclass(frozen=True)
class BSplineCurve:
    """A clamped B-spline curve.

    Attributes:
        degree: polynomial degree (3 for cubic).
        knots: full nondecreasing knot vector with the first and last knot
            each repeated ``degree + 1`` times.
        coefficients: one coefficient per basis function,
            ``len(knots) - degree - 1`` in total.
    """

    degree: int
    knots: np.ndarray
    coefficients: np.ndarray
    _spline: _ScipyBSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        coeffs = np.asarray(self.coefficients, dtype=float)
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        if coeffs.size != knots.size - self.degree - 1:
            raise ValueError(
                f"coefficient count {coeffs.size} != knot count {knots.size} "
                f"- degree {self.degree} - 1"
            )
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be nondecreasing")
        k = self.degree
        if not (np.all(knots[: k + 1] == knots[0]) and np.all(knots[-k - 1 :] == knots[-1])):
            raise ValueError("end knots must be clamped (repeated degree+1 times)")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(
            self, "_spline", _ScipyBSpline(knots, coeffs, self.degree, extrapolate=False)
        )

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def __call__(self, x):
        """Evaluate the curve; queries are clipped to the knot span."""
        lo, hi = self.domain
        x = np.clip(np.asarray(x, dtype=float), lo, hi)
        return self._spline(x)


def uniform_clamped_knots(lo: float, hi: float, degree: int, interior: int) -> np.ndarray:
    """Knot vector with `interior` uniformly spaced interior knots on (lo, hi)."""
    if hi <= lo:
        raise ValueError(f"empty knot interval [{lo}, {hi}]")
    inner = np.linspace(lo, hi, interior + 2)[1:-1]
    return np.concatenate([np.full(degree + 1, lo), inner, np.full(degree + 1, hi)])


def fit_lsq_spline(
    x: np.ndarray, y: np.ndarray, knots: np.ndarray, degree: int
) -> tuple[BSplineCurve, float]:
    """Least-squares fit of a clamped B-spline on a fixed knot vector.

    Returns the fitted curve and the residual sum of squares.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    # design_matrix rejects queries outside the base interval; the clip only
    # absorbs floating-point spill at the ends.
    xq = np.clip(x, knots[degree], knots[-degree - 1])
    basis = _ScipyBSpline.design_matrix(xq, knots, degree).toarray()
    coeffs, _, _, _ = np.linalg.lstsq(basis, y, rcond=None)
    resid = y - basis @ coeffs
    return BSplineCurve(degree, knots, coeffs), float(resid @ resid)


def fit_bspline_bic(
    points: np.ndarray,
    degree: int = 3,
    knot_counts: tuple[int, ...] = (0, 1, 2, 4, 6, 8, 10, 12, 16, 20),
) -> tuple[BSplineCurve, int, float]:
    """Fit candidate knot counts and keep the BIC minimizer.

    Args:
        points: (n, 2) array of (x, y) samples; x must span a finite
            nondegenerate interval.
        degree: spline degree.
        knot_counts: candidate interior-knot counts.

    Returns:
        (curve, chosen_interior_knots, bic_value) for the candidate with
        the lowest ``n*ln(RSS/n) + k*ln(n)`` where k is the coefficient
        count.  Candidates with as many coefficients as data points are
        skipped; equal BIC keeps the smaller knot count.

    Raises:
        ValueError: on empty/degenerate input or if every candidate is
            underdetermined.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError(f"expected (n, 2) points with n >= 2, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    x, y = pts[:, 0], pts[:, 1]
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi <= lo:
        raise ValueError("x values must span a nondegenerate interval")

    n = x.size
    best: tuple[float, int, BSplineCurve] | None = None
    for interior in sorted(set(int(c) for c in knot_counts)):
        if interior < 0:
            continue
        n_coeff = interior + degree + 1
        if n_coeff >= n:
            continue  # underdetermined, skip
        knots = uniform_clamped_knots(lo, hi, degree, interior)
        curve, rss = fit_lsq_spline(x, y, knots, degree)
        # Guard against log(0) on an exact fit; the k*ln(n) term still
        # separates candidates, so ties resolve to fewer knots below.
        bic = n * np.log(max(rss, 1e-300) / n) + n_coeff * np.log(n)
        if best is None or bic < best[0]:
            best = (bic, interior, curve)
    if best is None:
        raise ValueError("every candidate knot count is underdetermined for this data")
    bic, interior, curve = best
    return curve, interior, float(bic)
