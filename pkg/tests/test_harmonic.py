"""Harmonic extension, Poisson-disk oracle, and energy orthogonality."""

import math

import numpy as np
import pytest

from fblab.functional import energy
from fblab.grid import Ball, GridError, GridFunction, make_grid, sample
from fblab.harmonic import (
    harmonic_extension,
    interior_ball_mask,
    orthogonality_defect,
    poisson_disk_value,
)

from conftest import plane_profile, square_grid

BALL = Ball((0.0, 0.0), 0.5)


class TestHarmonicExtension:
    def test_constant_fixed_point(self):
        g = square_grid(33)
        u = sample(lambda c: np.full(c.shape[:-1], 3.0), g)
        ext = harmonic_extension(u, BALL, tol=1e-10)
        assert np.array_equal(ext.extension.values, u.values)
        assert ext.iterations <= 1

    def test_linear_already_harmonic(self):
        g = square_grid(33)
        u = sample(lambda c: c[..., 1], g)
        ext = harmonic_extension(u, BALL, tol=1e-10)
        assert np.max(np.abs(ext.extension.values - u.values)) < 1e-9
        assert ext.residual <= 1e-10

    def test_outside_ball_bitwise_unchanged(self):
        g = square_grid(33)
        u = sample(lambda c: np.sin(2.0 * c[..., 0]) * c[..., 1], g)
        ext = harmonic_extension(u, BALL, tol=1e-10)
        outside = ~interior_ball_mask(g, BALL)
        assert np.array_equal(ext.extension.values[outside], u.values[outside])

    def test_residual_below_tol(self):
        g = square_grid(65)
        u = sample(lambda c: np.abs(c[..., 1]), g)
        ext = harmonic_extension(u, BALL, tol=1e-11)
        assert ext.residual <= 1e-11

    def test_abs_profile_center_oracle(self):
        # Poisson average of |sin(theta)| at the center: 2/pi
        g = square_grid(129)
        ball = Ball((0.0, 0.0), 1.0 - 2.0 / 128.0)
        u = sample(lambda c: np.abs(c[..., 1]), g)
        ext = harmonic_extension(u, ball, tol=1e-10)
        center = ext.extension.values[64, 64]
        want = 2.0 / math.pi * ball.radius
        assert abs(center - want) / want <= 0.01

    def test_ball_outside_domain_rejected(self):
        g = square_grid(17)
        u = sample(lambda c: c[..., 0], g)
        with pytest.raises(GridError):
            harmonic_extension(u, Ball((0.9, 0.0), 0.5), tol=1e-8)


class TestEnergyMinimality:
    def test_extension_never_beats_slack(self):
        g = square_grid(65)
        h = max(g.spacing)
        u = sample(lambda c: np.abs(c[..., 1]) + 0.3 * c[..., 0] ** 2, g)
        ext = harmonic_extension(u, BALL, tol=1e-10)
        e_u = energy(u, BALL)
        e_star = energy(ext.extension, BALL)
        assert e_star <= e_u + 10.0 * h * e_u

    def test_orthogonality_defect_small(self):
        g = square_grid(65)
        u = sample(plane_profile, g)
        ext = harmonic_extension(u, BALL, tol=1e-10)
        e_u = energy(u, BALL)
        assert orthogonality_defect(u, ext, BALL) <= 5e-2 * e_u

    def test_orthogonality_defect_shrinks_with_h(self):
        vals = []
        for n in (65, 129):
            g = square_grid(n)
            u = sample(plane_profile, g)
            ext = harmonic_extension(u, BALL, tol=1e-10)
            vals.append(orthogonality_defect(u, ext, BALL))
        assert vals[1] < vals[0]

    def test_pythagoras(self):
        g = square_grid(65)
        h = max(g.spacing)
        u = sample(lambda c: np.abs(c[..., 1]), g)
        ext = harmonic_extension(u, BALL, tol=1e-10)
        diff = GridFunction(g, u.values - ext.extension.values)
        lhs = energy(diff, BALL)
        rhs = energy(u, BALL) - energy(ext.extension, BALL)
        assert abs(lhs - rhs) <= 10.0 * h * (energy(u, BALL) + 1.0)


class TestMaximumPrinciple:
    def test_randomized_boundary_data(self):
        # discrete maximum principle: interior values of the extension lie
        # within the range of the surrounding data, exactly
        g = square_grid(17)
        ball = Ball((0.0, 0.0), 0.6)
        inside = interior_ball_mask(g, ball)
        rng = np.random.default_rng(2024)
        for _ in range(200):
            vals = rng.normal(size=g.nodes_per_axis)
            u = GridFunction(g, vals)
            ext = harmonic_extension(u, ball, tol=1e-12)
            lo, hi = vals[~inside].min(), vals[~inside].max()
            interior_vals = ext.extension.values[inside]
            assert np.all(interior_vals >= lo - 1e-9)
            assert np.all(interior_vals <= hi + 1e-9)


class TestPoissonDisk:
    def test_unit_mass(self):
        val = poisson_disk_value(lambda t: np.ones_like(t), (0.3, -0.2), 1.0, 256)
        assert abs(val - 1.0) < 1e-10

    def test_mean_value_property(self):
        val = poisson_disk_value(np.sin, (0.0, 0.0), 1.0, 256)
        assert abs(val) < 1e-12

    def test_positive_part_oracle(self):
        val = poisson_disk_value(
            lambda t: np.maximum(np.sin(t), 0.0), (0.0, 0.0), 1.0, 2048
        )
        assert abs(val - 1.0 / math.pi) < 1e-4

    def test_point_outside_rejected(self):
        with pytest.raises(GridError):
            poisson_disk_value(np.sin, (1.0, 0.0), 1.0, 128)

    def test_agreement_with_extension(self):
        # interior values of the lattice extension match the analytic
        # Poisson integral of the (interpolated) boundary trace
        g = square_grid(129)
        r = 1.0 - 2.0 / 128.0
        ball = Ball((0.0, 0.0), r)
        u = sample(lambda c: np.abs(c[..., 1]), g)
        ext = harmonic_extension(u, ball, tol=1e-10)

        def trace(theta):
            pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
            return ext.extension.interpolate(pts)

        sup_boundary = r
        for pt in ((0.0, 0.0), (0.25, 0.1), (-0.3, -0.3)):
            direct = poisson_disk_value(trace, pt, r, 512)
            lattice = float(ext.extension.interpolate(np.asarray(pt)))
            assert abs(direct - lattice) <= 0.05 * sup_boundary
