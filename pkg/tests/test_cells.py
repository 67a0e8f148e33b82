import numpy as np
import pytest

from sdquant.cells import (
    PointConfiguration,
    as_points,
    on_diagonal,
    power_partition,
    tie_weights,
    voronoi_partition,
    write_label_pgm,
    write_region_stats_csv,
)
from sdquant.cost import CostSpec
from sdquant.density import parse_pgm
from sdquant.errors import DiagonalError


@pytest.mark.parametrize(
    "Y,expected",
    [
        ([[0.0], [1.0], [2.0]], [1 / 3, 1 / 3, 1 / 3]),
        ([[0.0], [0.0], [2.0]], [2 / 3, 0, 1 / 3]),
        ([[5.0], [5.0], [5.0]], [1, 0, 0]),
        ([[1.0], [2.0], [1.0], [2.0]], [0.5, 0.5, 0, 0]),
        ([[0.0, 1.0], [0.0, 1.0 + 1e-15], [0.0, 1.0]], [2 / 3, 1 / 3, 0]),
    ],
)
def test_tie_weights(Y, expected):
    lam = tie_weights(Y)
    np.testing.assert_allclose(lam, expected, rtol=0, atol=1e-15)
    assert abs(lam.sum() - 1) <= 1e-15


def test_diagonal_detection_is_exact():
    assert on_diagonal([[0.1, 0.2], [0.1, 0.2]])
    assert not on_diagonal([[0.1, 0.2], [0.1, np.nextafter(0.2, 1)]])
    assert not PointConfiguration([[0.0], [1.0]]).on_diagonal()


def test_as_points_shapes():
    assert as_points([0.2, 0.6]).shape == (2, 1)
    assert as_points([0.2, 0.6], dim=2).shape == (1, 2)
    with pytest.raises(ValueError):
        as_points([[np.nan, 0.0]])
    with pytest.raises(ValueError):
        as_points([[0.0, 1.0]], dim=3)


class TestVoronoi:
    def test_interval(self, coarse_interval):
        p = voronoi_partition(coarse_interval, [0.2, 0.6])
        np.testing.assert_allclose(p.masses, [0.4, 0.6], atol=1e-3)
        np.testing.assert_allclose(p.barycenters[:, 0], [0.2, 0.7], atol=1e-3)
        assert abs(p.masses.sum() - 1) <= 1e-12

    def test_single_point(self, unit_square):
        p = voronoi_partition(unit_square, [[0.3, 0.9]])
        assert np.all(p.labels == 0)
        assert p.masses[0] == pytest.approx(1.0, abs=1e-12)

    def test_square_halves(self, unit_square):
        p = voronoi_partition(unit_square, [[0.25, 0.5], [0.75, 0.5]])
        np.testing.assert_allclose(p.masses, [0.5, 0.5], atol=1e-12)
        np.testing.assert_allclose(p.barycenters, [[0.25, 0.5], [0.75, 0.5]], atol=1e-12)

    def test_labels_are_nearest(self, mixture64, rng):
        Y = rng.uniform(-0.8, 0.8, (7, 2))
        p = voronoi_partition(mixture64, Y)
        x = mixture64.centers[mixture64.support]
        dist = ((x[:, None, :] - Y[None]) ** 2).sum(-1)
        lab = p.labels[mixture64.support]
        assert np.all(dist[np.arange(len(x)), lab] <= dist.min(axis=1))
        assert np.all(p.labels[mixture64.masses == 0] == -1)

    def test_diagonal_requires_merge(self, coarse_interval):
        with pytest.raises(DiagonalError):
            voronoi_partition(coarse_interval, [0.5, 0.5])
        p = voronoi_partition(coarse_interval, [0.5, 0.5], merge_ties=True)
        assert p.masses[1] == 0.0 and p.masses[0] == pytest.approx(1.0)

    def test_parallel_axis_inequality(self, mixture64, rng):
        Y = rng.uniform(-0.7, 0.7, (6, 2))
        p = voronoi_partition(mixture64, Y)
        shift = p.masses * np.sum((p.barycenters - Y) ** 2, axis=1)
        assert np.all(p.second_moments >= shift)

    def test_permutation_consistency(self, mixture64, rng):
        Y = rng.uniform(-0.7, 0.7, (5, 2))
        perm = rng.permutation(5)
        a = voronoi_partition(mixture64, Y)
        b = voronoi_partition(mixture64, Y[perm])
        np.testing.assert_array_equal(b.masses, a.masses[perm])
        sup = mixture64.support
        np.testing.assert_array_equal(perm[b.labels[sup]], a.labels[sup])


class TestPower:
    def test_symmetric(self, coarse_interval):
        p = power_partition(coarse_interval, [0.0, 1.0], [0.0, 0.0])
        np.testing.assert_allclose(p.masses, [0.5, 0.5], atol=1e-12)

    def test_shifted_boundary(self, coarse_interval):
        # x^2 - 0.25 = (x - 1)^2 gives x = 0.625: a larger weight grows its cell
        p = power_partition(coarse_interval, [0.0, 1.0], [0.25, 0.0])
        np.testing.assert_allclose(p.masses, [0.625, 0.375], atol=1e-3)

    def test_zero_weights_reduce_to_voronoi(self, mixture64, rng):
        Y = rng.uniform(-0.7, 0.7, (8, 2))
        np.testing.assert_array_equal(
            power_partition(mixture64, Y, np.zeros(8)).labels, voronoi_partition(mixture64, Y).labels
        )

    @pytest.mark.parametrize("shift", [-3.0, 0.125, 17.0])
    def test_constant_shift_invariance(self, mixture64, rng, shift):
        Y = rng.uniform(-0.7, 0.7, (6, 2))
        w = rng.normal(0, 0.05, 6)
        np.testing.assert_array_equal(
            power_partition(mixture64, Y, w).labels, power_partition(mixture64, Y, w + shift).labels
        )

    def test_inactive_weights_ignored(self, coarse_interval):
        a = power_partition(coarse_interval, [0.2, 0.2, 0.8], [0.0, 99.0, 0.0])
        assert a.masses[1] == 0.0
        np.testing.assert_allclose(a.masses, [0.5, 0.0, 0.5], atol=1e-12)

    def test_custom_cost(self, coarse_interval):
        cost = CostSpec("custom", evaluator=lambda x, y: np.abs(x - y).sum(axis=-1), vectorized=True)
        p = power_partition(coarse_interval, [0.0, 1.0], [0.0, 0.0], cost)
        np.testing.assert_allclose(p.masses, [0.5, 0.5], atol=1e-12)

    def test_weight_length_checked(self, coarse_interval):
        with pytest.raises(ValueError):
            power_partition(coarse_interval, [0.0, 1.0], [0.0])


def test_label_raster_and_stats_csv(tmp_path, unit_square):
    p = voronoi_partition(unit_square, [[0.25, 0.5], [0.75, 0.5]])
    write_label_pgm(tmp_path / "l.pgm", p)
    pix = parse_pgm((tmp_path / "l.pgm").read_bytes())
    assert pix.shape == (64, 64)
    assert set(np.unique(pix)) == {1, 2}
    assert pix[0, 0] == 1 and pix[0, -1] == 2
    write_region_stats_csv(tmp_path / "s.csv", p)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "index,mass,barycenter,second_moment,point"
    assert len(lines) == 3
