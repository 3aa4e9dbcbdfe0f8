"""B-spline evaluation against a from-scratch Cox-de Boor oracle.

The oracle builds basis functions by the textbook recursion with explicit
Python loops so it shares nothing with the package implementation.
"""

import numpy as np
import pytest

from buttonlab import BSplineCurve, fit_bspline_bic, fit_lsq_spline, uniform_clamped_knots


def cox_de_boor(knots, i, k, x):
    """B-spline basis B_{i,k}(x) by the Cox-de Boor recursion."""
    if k == 0:
        # Half-open spans, except the last nonempty span which closes at
        # the right end so the curve is defined at x == knots[-1].
        if knots[i] <= x < knots[i + 1]:
            return 1.0
        if x == knots[-1] and knots[i] < knots[i + 1] and knots[i + 1] == knots[-1]:
            return 1.0
        return 0.0
    left = 0.0
    if knots[i + k] > knots[i]:
        left = (x - knots[i]) / (knots[i + k] - knots[i]) * cox_de_boor(knots, i, k - 1, x)
    right = 0.0
    if knots[i + k + 1] > knots[i + 1]:
        right = (
            (knots[i + k + 1] - x)
            / (knots[i + k + 1] - knots[i + 1])
            * cox_de_boor(knots, i + 1, k - 1, x)
        )
    return left + right


def oracle_eval(curve, x):
    total = 0.0
    for i, c in enumerate(curve.coefficients):
        total += c * cox_de_boor(curve.knots, i, curve.degree, float(x))
    return total


def random_curve(rng, degree=3, interior=None):
    if interior is None:
        interior = int(rng.integers(0, 7))
    knots = uniform_clamped_knots(0.0, 1.0, degree, interior)
    coeffs = rng.normal(size=knots.size - degree - 1)
    return BSplineCurve(degree, knots, coeffs)


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_evaluation_matches_cox_de_boor(degree):
    rng = np.random.default_rng(degree)
    for _ in range(8):
        curve = random_curve(rng, degree=degree)
        xs = np.concatenate([rng.uniform(0.0, 1.0, size=20), [0.0, 1.0], curve.knots[3:5]])
        got = curve(xs)
        for x, g in zip(xs, got):
            assert g == pytest.approx(oracle_eval(curve, x), abs=1e-10)


def test_evaluation_at_repeated_interior_knots():
    # Doubled interior knots drop continuity to C^1; evaluation must still
    # agree with the recursion exactly at the knot.
    degree = 3
    knots = np.array([0.0, 0, 0, 0, 0.4, 0.4, 0.7, 1.0, 1, 1, 1])
    rng = np.random.default_rng(5)
    coeffs = rng.normal(size=knots.size - degree - 1)
    curve = BSplineCurve(degree, knots, coeffs)
    for x in [0.0, 0.4, 0.69999, 0.7, 0.94, 1.0]:
        assert curve(x) == pytest.approx(oracle_eval(curve, x), abs=1e-10)


def test_queries_outside_domain_clip_to_ends():
    rng = np.random.default_rng(6)
    curve = random_curve(rng)
    assert curve(-3.0) == pytest.approx(curve(0.0), abs=1e-12)
    assert curve(42.0) == pytest.approx(curve(1.0), abs=1e-12)
    got = curve(np.array([-1.0, 0.5, 2.0]))
    assert got.shape == (3,)


def test_uniform_clamped_knot_structure():
    knots = uniform_clamped_knots(2.0, 6.0, 3, 4)
    assert knots.size == 4 + 2 * 4
    assert np.all(knots[:4] == 2.0) and np.all(knots[-4:] == 6.0)
    assert np.allclose(np.diff(knots[3:-3]), 0.8)
    with pytest.raises(ValueError):
        uniform_clamped_knots(1.0, 1.0, 3, 2)


def test_curve_validation():
    knots = uniform_clamped_knots(0.0, 1.0, 3, 2)
    with pytest.raises(ValueError):
        BSplineCurve(3, knots, np.zeros(3))
    with pytest.raises(ValueError):
        BSplineCurve(0, knots, np.zeros(6))
    bad = knots.copy()
    bad[5], bad[6] = bad[6], bad[5]
    if bad[5] > bad[6]:
        with pytest.raises(ValueError):
            BSplineCurve(3, bad, np.zeros(6))
    with pytest.raises(ValueError):
        BSplineCurve(3, np.linspace(0, 1, 10), np.zeros(6))


def test_lsq_fit_recovers_spline_data_exactly():
    rng = np.random.default_rng(7)
    truth = random_curve(rng, interior=4)
    x = np.linspace(0.0, 1.0, 120)
    y = truth(x)
    fitted, rss = fit_lsq_spline(x, y, truth.knots, truth.degree)
    assert rss < 1e-18
    assert np.allclose(fitted.coefficients, truth.coefficients, atol=1e-8)
    assert np.allclose(fitted(x), y, atol=1e-10)


def test_bic_recovers_generating_knot_count():
    # x spans [0, 1] exactly so the candidate knot grid for interior=8
    # coincides with the generating spline's knots.
    hits = 0
    for seed in range(5):
        local = np.random.default_rng(seed)
        truth = random_curve(local, interior=8)
        x = np.linspace(0.0, 1.0, 400)
        y = truth(x) + local.normal(0.0, 0.01, size=400)
        curve, interior, _ = fit_bspline_bic(np.column_stack([x, y]))
        assert 6 <= interior <= 10
        dense = np.linspace(0.0, 1.0, 1000)
        rmse = float(np.sqrt(np.mean((curve(dense) - truth(dense)) ** 2)))
        assert rmse < 0.02
        hits += interior == 8
    assert hits >= 3


def test_bic_prefers_no_interior_knots_for_cubic_data():
    rng = np.random.default_rng(9)
    x = np.sort(rng.uniform(0.0, 1.0, size=200))
    y = 2.0 * x**3 - x + 0.5 + rng.normal(0.0, 0.005, size=200)
    _, interior, _ = fit_bspline_bic(np.column_stack([x, y]))
    assert interior == 0


def test_bic_validation():
    with pytest.raises(ValueError):
        fit_bspline_bic(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        fit_bspline_bic(np.array([[0.0, 1.0], [0.0, 2.0]]))
    pts = np.column_stack([np.linspace(0, 1, 30), np.zeros(30)])
    pts[3, 1] = np.nan
    with pytest.raises(ValueError):
        fit_bspline_bic(pts)
    few = np.column_stack([np.linspace(0, 1, 5), np.zeros(5)])
    with pytest.raises(ValueError):
        fit_bspline_bic(few, knot_counts=(10, 20))


def test_bic_value_formula():
    rng = np.random.default_rng(10)
    x = np.sort(rng.uniform(0.0, 1.0, size=150))
    y = np.sin(6.0 * x) + rng.normal(0.0, 0.02, size=150)
    curve, interior, bic = fit_bspline_bic(np.column_stack([x, y]))
    _, rss = fit_lsq_spline(x, y, curve.knots, curve.degree)
    n = x.size
    k = interior + curve.degree + 1
    assert bic == pytest.approx(n * np.log(rss / n) + k * np.log(n), rel=1e-12)
