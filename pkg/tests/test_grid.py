"""Grid geometry, kernel, interpolation and finite-difference operators."""

import numpy as np
import pytest
from scipy.signal import convolve

from core.errors import ArgumentError, DomainError
from core.grid import (
    Kernel,
    UniformGrid,
    axis_laplacian,
    build_divergence,
    build_gradient,
    build_laplacian,
    interpolation_matrix,
    kernel_F,
    kernel_eval_1d,
    trilinear_weights,
)


class TestKernel:
    def test_support_boundary(self):
        assert kernel_eval_1d(2.0) == 0.0
        assert kernel_eval_1d(-2.5) == 0.0

    def test_matches_repeated_box_convolution(self):
        """Four unit boxes convolved together give the cubic B-spline."""
        step = 1e-3
        box = np.ones(int(round(1.0 / step)))
        spline = box
        for _ in range(3):
            spline = convolve(spline, box) * step
        t = (np.arange(spline.size) - (spline.size - 1) / 2) * step
        for t0, expected in ((0.0, 2.0 / 3.0), (1.0, 1.0 / 6.0)):
            numeric = spline[np.argmin(np.abs(t - t0))]
            assert abs(numeric - expected) < 5e-3
            assert kernel_eval_1d(t0) == pytest.approx(expected)

    def test_symmetric_nonnegative_unit_integral(self):
        t = np.linspace(-3, 3, 6001)
        values = kernel_eval_1d(t)
        assert np.all(values >= 0.0)
        np.testing.assert_allclose(values, kernel_eval_1d(-t))
        assert np.trapz(values, t) == pytest.approx(1.0, abs=1e-6)

    def test_lipschitz_bound_holds(self, rng):
        kernel = Kernel(width=0.1)
        for dim in (2, 3):
            y = rng.uniform(-0.25, 0.25, size=(5000, dim))
            y2 = y + rng.normal(scale=1e-3, size=y.shape)
            diff = np.abs(kernel.evaluate(y) - kernel.evaluate(y2))
            bound = kernel.lipschitz(dim) * np.linalg.norm(y - y2, axis=1)
            assert np.all(diff <= bound + 1e-15)


class TestUniformGrid:
    def test_two_dimensional_header_reports_unit_depth(self):
        grid = UniformGrid((5, 4, 1), (0.0, 0.0, 0.0), 0.25)
        assert grid.dim == 2
        assert grid.dims == (5, 4, 1)
        assert grid.node_count == 20

    def test_invalid_shapes_are_rejected(self):
        with pytest.raises(ArgumentError):
            UniformGrid((1, 4), (0.0, 0.0), 0.1)
        with pytest.raises(ArgumentError):
            UniformGrid((4, 4), (0.0, 0.0), 0.0)

    def test_x_fastest_ordering(self):
        grid = UniformGrid((3, 2), (0.0, 0.0), 1.0)
        np.testing.assert_array_equal(grid.multi_index(np.arange(6)), [[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]])
        np.testing.assert_array_equal(grid.flat_index(np.array([[2, 1]])), [5])

    def test_fit_contains_cloud_strictly(self, rng):
        points = rng.uniform(-2.0, 3.0, size=(50, 3))
        grid = UniformGrid.fit(points, 20, padding=0.1)
        assert np.all(grid.contains(points, strict=True))
        assert grid.shape == (20, 20, 20)

    def test_require_inside_raises_domain_error(self, unit_grid_2d):
        with pytest.raises(DomainError):
            unit_grid_2d.require_inside(np.array([[1.5, 0.5]]))


class TestKernelF:
    def test_at_node(self, unit_grid_2d, unit_grid_3d):
        assert kernel_F(unit_grid_2d, 13, unit_grid_2d.node_positions([13])[0]) == pytest.approx((2 / 3) ** 2)
        assert kernel_F(unit_grid_3d, 50, unit_grid_3d.node_positions([50])[0]) == pytest.approx((2 / 3) ** 3)

    def test_compact_support(self, unit_grid_2d):
        o = unit_grid_2d.node_positions([44])[0]
        y = o + np.array([2.5 * unit_grid_2d.spacing, 0.0])
        assert kernel_F(unit_grid_2d, 44, y) == 0.0

    def test_role_swap(self, unit_grid_2d):
        grid = unit_grid_2d
        node_a, node_b = 22, 33
        b = grid.node_positions([node_b])[0]
        a = grid.node_positions([node_a])[0]
        assert kernel_F(grid, node_a, b) == kernel_F(grid, node_b, a)


class TestTrilinearWeights:
    def test_at_node(self, unit_grid_3d):
        p = unit_grid_3d.node_positions([37])
        nodes, weights = trilinear_weights(unit_grid_3d, p)
        assert weights[0][nodes[0] == 37].sum() == pytest.approx(1.0)
        assert weights[0][nodes[0] != 37].sum() == pytest.approx(0.0)

    def test_cell_center(self, unit_grid_3d):
        h = unit_grid_3d.spacing
        _, weights = trilinear_weights(unit_grid_3d, np.array([[1.5 * h, 2.5 * h, 0.5 * h]]))
        np.testing.assert_allclose(weights[0], np.full(8, 1.0 / 8.0))

    def test_edge_midpoint(self, unit_grid_3d):
        h = unit_grid_3d.spacing
        _, weights = trilinear_weights(unit_grid_3d, np.array([[1.5 * h, 2.0 * h, 1.0 * h]]))
        assert np.count_nonzero(weights[0] > 1e-12) == 2
        np.testing.assert_allclose(np.sort(weights[0])[-2:], [0.5, 0.5])

    def test_partition_of_unity(self, rng, unit_grid_3d):
        points = rng.uniform(0.0, 1.0, size=(1000, 3))
        _, weights = trilinear_weights(unit_grid_3d, points)
        assert np.all(weights >= 0.0)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-14)
        W = interpolation_matrix(unit_grid_3d, points)
        np.testing.assert_allclose(np.asarray(W.sum(axis=1)).ravel(), 1.0, atol=1e-14)

    def test_outside_raises(self, unit_grid_2d):
        with pytest.raises(DomainError):
            trilinear_weights(unit_grid_2d, np.array([[0.5, -0.1]]))


class TestOperators:
    def test_laplacian_nullspace_and_symmetry(self, unit_grid_3d):
        L = build_laplacian(unit_grid_3d)
        np.testing.assert_allclose(L @ np.ones(unit_grid_3d.node_count), 0.0, atol=1e-9)
        assert abs(L - L.T).max() == 0.0
        eigenvalues = np.linalg.eigvalsh(L.toarray())
        assert eigenvalues.max() < 1e-8

    def test_one_dimensional_stencil(self):
        L = axis_laplacian(3, 0.5).toarray()
        np.testing.assert_allclose(L[1], np.array([1.0, -2.0, 1.0]) / 0.25)
        np.testing.assert_allclose(L[0], np.array([-1.0, 1.0, 0.0]) / 0.25)

    def test_interior_diagonal(self, unit_grid_3d):
        L = build_laplacian(unit_grid_3d)
        h = unit_grid_3d.spacing
        interior = unit_grid_3d.flat_index(np.array([[2, 2, 2]]))[0]
        assert L[interior, interior] == pytest.approx(-6.0 / h ** 2)

    def test_cosine_is_eigenvector(self):
        grid = UniformGrid((12, 9), (0.0, 0.0), 0.1)
        n = grid.shape[0]
        ix = grid.multi_index(np.arange(grid.node_count))[:, 0]
        f = np.cos(np.pi * 2 * (ix + 0.5) / n)
        expected = -(2.0 - 2.0 * np.cos(2 * np.pi / n)) / grid.spacing ** 2
        np.testing.assert_allclose(build_laplacian(grid) @ f, expected * f, atol=1e-9)

    def test_laplacian_equals_divergence_of_gradient(self, rng):
        for grid in (UniformGrid.unit(7, dim=2), UniformGrid.unit(5, dim=3)):
            f = rng.standard_normal(grid.node_count)
            composed = sum(Z @ (G @ f) for Z, G in zip(build_divergence(grid), build_gradient(grid)))
            assert np.max(np.abs(build_laplacian(grid) @ f - composed)) <= 1e-9 * np.max(np.abs(composed))

    def test_divergence_of_linear_field(self):
        grid = UniformGrid.unit(8, dim=2)
        positions = grid.node_positions()
        multi = grid.multi_index(np.arange(grid.node_count))
        Zx, Zy = build_divergence(grid)
        interior = (multi[:, 0] > 0) & (multi[:, 0] < 7)
        np.testing.assert_allclose((Zx @ positions[:, 0])[interior], 1.0)
        np.testing.assert_allclose((Zx @ np.ones(grid.node_count))[interior], 0.0, atol=1e-12)
        np.testing.assert_allclose(Zy @ np.zeros(grid.node_count), 0.0)
