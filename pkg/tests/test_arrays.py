"""Array geometry, steering vectors, and angle grids."""

import numpy as np
import pytest

from ckmbeam.arrays import (
    AngleGrid,
    AnglePair,
    UpaGeometry,
    direction_to_angles,
    response_matrix,
    steering_vector,
)

from oracles import steering_scalar, wrapped_nearest_index


class TestUpaGeometry:
    def test_size(self):
        assert UpaGeometry(3, 4).size == 12

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            UpaGeometry(0, 4)
        with pytest.raises(ValueError):
            UpaGeometry(2, -1)

    def test_rejects_bad_spacing(self):
        with pytest.raises(ValueError):
            UpaGeometry(2, 2, spacing=0.0)


class TestAnglePair:
    def test_range_validation(self):
        with pytest.raises(ValueError):
            AnglePair(-0.1, 0.0)
        with pytest.raises(ValueError):
            AnglePair(0.5, 2 * np.pi)
        AnglePair(np.pi, 0.0)  # zenith endpoint allowed


class TestDirectionToAngles:
    def test_cardinal_directions(self):
        up = direction_to_angles(np.array([0.0, 0.0, 1.0]))
        assert abs(up.zenith) < 1e-14
        east = direction_to_angles(np.array([1.0, 0.0, 0.0]))
        assert abs(east.zenith - np.pi / 2) < 1e-14
        assert abs(east.azimuth) < 1e-14
        north = direction_to_angles(np.array([0.0, 1.0, 0.0]))
        assert abs(north.azimuth - np.pi / 2) < 1e-14

    def test_negative_y_wraps_positive(self):
        ang = direction_to_angles(np.array([0.0, -1.0, 0.0]))
        assert abs(ang.azimuth - 1.5 * np.pi) < 1e-14

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            direction_to_angles(np.zeros(3))


class TestSteeringVector:
    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(71)
        for _ in range(50):
            n_z = int(rng.integers(1, 6))
            n_y = int(rng.integers(1, 6))
            spacing = float(rng.uniform(0.25, 1.0))
            geom = UpaGeometry(n_z, n_y, spacing)
            ang = AnglePair(rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi))
            got = steering_vector(geom, ang)
            ref = steering_scalar(n_z, n_y, spacing, ang.zenith, ang.azimuth)
            np.testing.assert_allclose(got, ref, atol=1e-13)

    def test_broadside_is_constant_phase(self):
        """Zenith pi/2, azimuth 0: the phase term vanishes for half-wave
        spacing only in the y index; with cos(pi/2)=0 and sin(0)=0 every
        element sees zero phase."""
        geom = UpaGeometry(4, 4)
        v = steering_vector(geom, AnglePair(np.pi / 2, 0.0))
        np.testing.assert_allclose(v, np.full(16, 0.25, dtype=complex), atol=1e-14)

    def test_unit_norm(self):
        geom = UpaGeometry(3, 5)
        v = steering_vector(geom, AnglePair(1.0, 2.0))
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12

    def test_response_matrix_stacks_columns(self):
        geom = UpaGeometry(2, 3)
        angles = [AnglePair(0.3, 0.4), AnglePair(1.2, 5.0)]
        mat = response_matrix(geom, angles)
        assert mat.shape == (6, 2)
        np.testing.assert_allclose(mat[:, 0], steering_vector(geom, angles[0]))
        np.testing.assert_allclose(mat[:, 1], steering_vector(geom, angles[1]))

    def test_response_matrix_empty(self):
        mat = response_matrix(UpaGeometry(2, 2), [])
        assert mat.shape == (4, 0)


class TestAngleGrid:
    def test_for_arrays_matches_sizes(self):
        grid = AngleGrid.for_arrays(UpaGeometry(2, 4), UpaGeometry(2, 2))
        assert grid.tx_zenith_count * grid.tx_azimuth_count >= 8
        assert grid.rx_zenith_count * grid.rx_azimuth_count >= 4
        grid.validate_for(UpaGeometry(2, 4), UpaGeometry(2, 2))

    def test_validate_rejects_coarse_grid(self):
        grid = AngleGrid(2, 2, 2, 2)
        with pytest.raises(ValueError):
            grid.validate_for(UpaGeometry(4, 4), UpaGeometry(2, 2))

    def test_zenith_points_are_midpoints(self):
        grid = AngleGrid(4, 8, 4, 8)
        zeniths = grid.rx_zeniths()
        np.testing.assert_allclose(zeniths, (np.arange(4) + 0.5) * np.pi / 4)

    def test_azimuth_points_start_at_zero(self):
        grid = AngleGrid(4, 8, 4, 8)
        azis = grid.rx_azimuths()
        np.testing.assert_allclose(azis, np.arange(8) * 2 * np.pi / 8)

    def test_snap_matches_nearest_index_oracle(self):
        rng = np.random.default_rng(73)
        grid = AngleGrid(5, 9, 6, 7)
        zeniths = grid.tx_zeniths()
        azis = grid.tx_azimuths()
        for _ in range(200):
            ang = AnglePair(rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi))
            snapped = grid.snap_tx(ang)
            zi = wrapped_nearest_index(ang.zenith, zeniths)
            ai = wrapped_nearest_index(ang.azimuth, azis, period=2 * np.pi)
            assert abs(snapped.zenith - zeniths[zi]) < 1e-14
            assert abs(snapped.azimuth - azis[ai]) < 1e-14

    def test_azimuth_snap_wraps(self):
        """An azimuth just below 2*pi is closer to 0 than to the last point
        when the wrap distance is honored."""
        grid = AngleGrid(2, 4, 2, 4)
        # points: 0, pi/2, pi, 3pi/2; query 2*pi - 0.01 wraps to 0
        snapped = grid.snap_rx(AnglePair(1.0, 2 * np.pi - 0.01))
        assert abs(snapped.azimuth - 0.0) < 1e-14

    def test_pair_ordering_is_zenith_major(self):
        grid = AngleGrid(2, 3, 2, 3)
        pairs = grid.rx_pairs()
        assert len(pairs) == 6
        assert pairs[0].zenith == pairs[1].zenith == pairs[2].zenith
        assert pairs[0].azimuth < pairs[1].azimuth < pairs[2].azimuth
        assert pairs[3].zenith > pairs[2].zenith

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            AngleGrid(0, 3, 2, 3)
