import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sdquant.cells import power_partition, tie_weights, voronoi_partition
from sdquant.density import GridDensity, build_uniform_box, normalize, region_stats
from sdquant.divergences import SlicedConfig, sliced_w2_discrete, w2_1d_discrete
from sdquant.dual import dual_objective
from sdquant.errors import DegenerateMeasureError
from sdquant.lloyd import loss_optimal, loss_uniform

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])

GRID = build_uniform_box((0.0, 0.0), (1.0, 1.0), (16, 16))
LINE = build_uniform_box(0.0, 1.0, 64)

coords = st.floats(-1.0, 2.0, allow_nan=False, width=64)
dyadic = st.integers(-64, 64).map(lambda k: k / 64.0)


def simplex(n):
    return arrays(np.float64, n, elements=st.floats(0.05, 1.0)).map(lambda a: a / math.fsum(a)).map(
        lambda a: np.append(a[:-1], 1.0 - math.fsum(a[:-1]))
    ).filter(lambda a: a[-1] >= 0)


@SETTINGS
@given(st.lists(st.integers(0, 3), min_size=1, max_size=9))
def test_tie_weights_structure(groups):
    Y = np.array(groups, dtype=float)[:, None]
    lam = tie_weights(Y)
    n = len(groups)
    assert math.isclose(math.fsum(lam), 1.0, abs_tol=1e-15)
    assert np.allclose(lam * n, np.round(lam * n))
    for g in set(groups):
        first = groups.index(g)
        assert lam[first] * n == groups.count(g)
    if len(set(groups)) == n:
        assert np.all(lam == 1.0 / n)


cell_value = st.one_of(st.just(0.0), st.floats(1e-6, 10.0))


@SETTINGS
@given(arrays(np.float64, (16, 16), elements=cell_value).filter(lambda v: v.sum() > 0))
def test_normalize_idempotent(values):
    d = normalize(GridDensity((0.0, 0.0), (0.5, 0.25), values))
    assert abs(d.total_mass() - 1) <= 1e-12
    assert np.array_equal(normalize(d).values, d.values)


def test_subnormal_values_are_degenerate():
    with pytest.raises(DegenerateMeasureError):
        normalize(GridDensity((0.0, 0.0), (0.5, 0.25), np.full((4, 4), 5e-324)))


@SETTINGS
@given(arrays(np.int64, GRID.size, elements=st.integers(0, 4)))
def test_region_masses_partition_unity(labels):
    total = math.fsum(region_stats(GRID, labels == k).mass for k in range(5))
    assert abs(total - 1) <= 1e-12


@SETTINGS
@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=6, unique=True), st.lists(dyadic, min_size=6, max_size=6), dyadic)
def test_power_labels_shift_invariant(pts, w, k):
    Y = np.array(pts)
    w = np.array(w[: len(Y)])
    a = power_partition(GRID, Y, w).labels
    b = power_partition(GRID, Y, w + k).labels
    assert np.array_equal(a, b)


@SETTINGS
@given(
    st.lists(st.tuples(dyadic, dyadic), min_size=1, max_size=4, unique=True).filter(lambda p: len(p) != 3),
    st.lists(dyadic, min_size=4, max_size=4),
    dyadic,
)
def test_dual_objective_shift_invariant(pts, w, k):
    # dyadic data and N in {1, 2, 4} keep every term exact
    Y = np.array(pts)
    w = np.array(w[: len(Y)])
    assert dual_objective(GRID, Y, w + k) == dual_objective(GRID, Y, w)


@SETTINGS
@given(
    st.lists(st.tuples(coords, coords), min_size=2, max_size=5, unique=True),
    st.lists(st.floats(-0.5, 0.5), min_size=10, max_size=10),
    st.floats(0.0, 1.0),
)
def test_dual_objective_concave(pts, ws, t):
    Y = np.array(pts)
    n = len(Y)
    w1, w2 = np.array(ws[:n]), np.array(ws[5 : 5 + n])
    mid = dual_objective(GRID, Y, t * w1 + (1 - t) * w2)
    assert mid >= t * dual_objective(GRID, Y, w1) + (1 - t) * dual_objective(GRID, Y, w2) - 1e-10


@SETTINGS
@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=6, unique=True))
def test_voronoi_equals_zero_weight_power(pts):
    Y = np.array(pts)
    assert np.array_equal(voronoi_partition(GRID, Y).labels, power_partition(GRID, Y, np.zeros(len(Y))).labels)


@SETTINGS
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=4))
def test_optimal_loss_below_uniform_loss(pts):
    # dropping the equal-mass constraint can only lower the cost
    Y = np.array(pts)[:, None]
    G = loss_optimal(LINE, Y)
    F, _ = loss_uniform(LINE, Y)
    assert G <= F + 1e-12


@SETTINGS
@given(
    st.lists(st.floats(-5, 5), min_size=1, max_size=8),
    st.lists(st.floats(-5, 5), min_size=1, max_size=8),
    st.floats(-3, 3),
)
def test_w2_line_metric_facts(xa, xb, c):
    a = np.full(len(xa), 1.0 / len(xa))
    b = np.full(len(xb), 1.0 / len(xb))
    a[-1] = 1.0 - math.fsum(a[:-1])
    b[-1] = 1.0 - math.fsum(b[:-1])
    v = w2_1d_discrete(xa, a, xb, b)
    assert v >= 0
    assert math.isclose(v, w2_1d_discrete(xb, b, xa, a), rel_tol=1e-12, abs_tol=1e-12)
    shifted = w2_1d_discrete(np.array(xa) + c, a, np.array(xb) + c, b)
    assert math.isclose(v, shifted, rel_tol=1e-9, abs_tol=1e-9)
    assert w2_1d_discrete(xa, a, xa, a) == 0.0


@SETTINGS
@given(
    st.lists(st.tuples(coords, coords), min_size=1, max_size=5),
    st.lists(st.tuples(coords, coords), min_size=1, max_size=5),
)
def test_sliced_symmetric_nonnegative(X, Y):
    cfg = SlicedConfig(32, 0)
    a = sliced_w2_discrete(X, Y, cfg=cfg).value
    b = sliced_w2_discrete(Y, X, cfg=cfg).value
    assert a >= 0 and math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-14)
