"""Geometric channels, ray-traced scenes, and the path CSV interchange."""

import io

import numpy as np
import pytest

from ckmbeam.arrays import AngleGrid, AnglePair, UpaGeometry, direction_to_angles
from ckmbeam.channels import (
    Box,
    PathCsvError,
    PathSet,
    PropagationPath,
    Rectangle,
    Scene,
    export_paths_csv,
    generate_scene_paths,
    import_paths_csv,
    nearest_grid_angles,
    synthesize_channel,
)

from oracles import channel_triple_loop, mirror_point


def unit_path(gain=1.0 + 0j):
    return PropagationPath(gain, AnglePair(1.0, 2.0), AnglePair(0.5, 4.0))


class TestSynthesizeChannel:
    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(79)
        tx = UpaGeometry(2, 4)
        rx = UpaGeometry(2, 2)
        for _ in range(30):
            n_paths = int(rng.integers(1, 6))
            paths = [
                PropagationPath(
                    complex(rng.normal(), rng.normal()),
                    AnglePair(rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)),
                    AnglePair(rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)),
                )
                for _ in range(n_paths)
            ]
            ps = PathSet(np.array([1.0, 2.0, 3.0]), paths)
            got = synthesize_channel(ps, tx, rx)
            ref = channel_triple_loop(paths, tx, rx)
            np.testing.assert_allclose(got, ref, atol=1e-12)

    def test_single_unit_path_norm(self):
        """One unit-gain path: Frobenius norm is sqrt(M_r*M_t) by the
        normalization convention."""
        tx = UpaGeometry(2, 4)
        rx = UpaGeometry(2, 2)
        ps = PathSet(np.zeros(3), [unit_path()])
        h = synthesize_channel(ps, tx, rx)
        assert abs(np.linalg.norm(h) - np.sqrt(8 * 4)) < 1e-10

    def test_empty_path_set_gives_zeros(self):
        ps = PathSet(np.zeros(3), [])
        h = synthesize_channel(ps, UpaGeometry(2, 2), UpaGeometry(2, 2))
        assert h.shape == (4, 4)
        assert np.all(h == 0)

    def test_rank_bounded_by_path_count(self):
        ps = PathSet(np.zeros(3), [unit_path(), unit_path(0.5j)])
        h = synthesize_channel(ps, UpaGeometry(4, 4), UpaGeometry(2, 4))
        assert np.linalg.matrix_rank(h, tol=1e-9) <= 2


class TestNearestGridAngles:
    def test_snaps_both_sides(self):
        grid = AngleGrid(4, 8, 4, 8)
        ps = PathSet(np.zeros(3), [unit_path()])
        snapped = nearest_grid_angles(grid, ps)
        path = snapped.paths[0]
        assert path.aod.zenith in grid.tx_zeniths()
        assert path.aod.azimuth in grid.tx_azimuths()
        assert path.aoa.zenith in grid.rx_zeniths()
        assert path.gain == ps.paths[0].gain


class TestRectangle:
    def test_normal_is_unit(self):
        r = Rectangle(np.zeros(3), np.array([2.0, 0, 0]), np.array([0, 3.0, 0]))
        assert abs(np.linalg.norm(r.normal) - 1.0) < 1e-14

    def test_rejects_parallel_edges(self):
        with pytest.raises(ValueError):
            Rectangle(np.zeros(3), np.array([1.0, 0, 0]), np.array([2.0, 0, 0]))

    def test_rejects_negative_loss(self):
        with pytest.raises(ValueError):
            Rectangle(
                np.zeros(3),
                np.array([1.0, 0, 0]),
                np.array([0, 1.0, 0]),
                loss_db=-1.0,
            )


class TestBox:
    def test_contains_and_sampling(self):
        box = Box(np.array([0.0, 0, 0]), np.array([1.0, 2.0, 3.0]))
        assert box.contains(np.array([0.5, 1.0, 1.5]))
        assert not box.contains(np.array([1.5, 1.0, 1.5]))
        rng = np.random.default_rng(83)
        for _ in range(20):
            assert box.contains(box.sample(rng))

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            Box(np.array([1.0, 0, 0]), np.array([0.0, 1, 1]))


class TestSceneGeneration:
    def _scene(self, reflectors=()):
        return Scene(
            bs_position=np.array([0.0, 0.0, 10.0]),
            wavelength=0.01,
            ue_region=Box(np.array([5.0, -10.0, 0.0]), np.array([50.0, 10.0, 3.0])),
            reflectors=tuple(reflectors),
        )

    def test_los_only(self):
        scene = self._scene()
        ue = np.array([20.0, 0.0, 1.5])
        ps = generate_scene_paths(scene, ue)
        assert len(ps.paths) == 1
        d = np.linalg.norm(ue - scene.bs_position)
        expected = (0.01 / (4 * np.pi * d)) * np.exp(-2j * np.pi * d / 0.01)
        assert abs(ps.paths[0].gain - expected) < 1e-15
        aod = direction_to_angles(ue - scene.bs_position)
        assert abs(ps.paths[0].aod.zenith - aod.zenith) < 1e-12
        aoa = direction_to_angles(scene.bs_position - ue)
        assert abs(ps.paths[0].aoa.azimuth - aoa.azimuth) < 1e-12

    def test_reflector_adds_image_path(self):
        """One wall parallel to the x-z plane at y=12: the bounce length must
        equal the straight line from the mirrored base station to the user."""
        wall = Rectangle(
            np.array([0.0, 12.0, 0.0]),
            np.array([60.0, 0.0, 0.0]),
            np.array([0.0, 0.0, 12.0]),
            loss_db=6.0,
        )
        scene = self._scene([wall])
        ue = np.array([30.0, 5.0, 1.5])
        ps = generate_scene_paths(scene, ue)
        assert len(ps.paths) == 2  # LoS first, then the bounce
        image = mirror_point(scene.bs_position, wall.corner, wall.normal)
        length = np.linalg.norm(image - ue)
        expected_mag = (0.01 / (4 * np.pi * length)) * 10 ** (-6.0 / 20.0)
        assert abs(abs(ps.paths[1].gain) - expected_mag) < 1e-12

    def test_bounce_weaker_than_los(self):
        wall = Rectangle(
            np.array([0.0, 12.0, 0.0]),
            np.array([60.0, 0.0, 0.0]),
            np.array([0.0, 0.0, 12.0]),
            loss_db=6.0,
        )
        ps = generate_scene_paths(self._scene([wall]), np.array([30.0, 5.0, 1.5]))
        assert abs(ps.paths[1].gain) < abs(ps.paths[0].gain)

    def test_reflection_point_must_hit_panel(self):
        """A short wall segment far from the specular point produces no
        bounce path."""
        wall = Rectangle(
            np.array([0.0, 12.0, 0.0]),
            np.array([1.0, 0.0, 0.0]),
            np.array([0.0, 0.0, 1.0]),
            loss_db=6.0,
        )
        ps = generate_scene_paths(self._scene([wall]), np.array([45.0, 5.0, 1.5]))
        assert len(ps.paths) == 1

    def test_blockage_removes_los(self):
        """A screen square across the direct ray suppresses the LoS path but
        the side wall still reflects."""
        screen = Rectangle(
            np.array([10.0, -2.0, 0.0]),
            np.array([0.0, 4.0, 0.0]),
            np.array([0.0, 0.0, 12.0]),
            loss_db=30.0,
        )
        wall = Rectangle(
            np.array([0.0, 12.0, 0.0]),
            np.array([60.0, 0.0, 0.0]),
            np.array([0.0, 0.0, 12.0]),
            loss_db=6.0,
        )
        scene = self._scene([screen, wall])
        ue = np.array([20.0, 0.0, 1.5])
        ps = generate_scene_paths(scene, ue)
        # direct ray passes x=10 at y=0, z about 5.75: inside the screen
        kinds = [p for p in ps.paths]
        assert len(kinds) == 1
        image = mirror_point(scene.bs_position, wall.corner, wall.normal)
        length = np.linalg.norm(image - ue)
        assert abs(abs(kinds[0].gain) * (4 * np.pi * length / 0.01) - 10 ** (-6.0 / 20.0)) < 1e-9

    def test_ue_outside_region_rejected(self):
        with pytest.raises(ValueError):
            generate_scene_paths(self._scene(), np.array([200.0, 0.0, 1.5]))

    def test_one_sided_reflector_ignored_from_behind(self):
        """Both endpoints on the negative-normal side: no image path."""
        wall = Rectangle(
            np.array([0.0, -12.0, 0.0]),
            np.array([60.0, 0.0, 0.0]),
            np.array([0.0, 0.0, 12.0]),
        )
        # normal points along -y (u cross v = x cross z = -y): BS and UE at
        # y>=0 sit behind it
        assert wall.normal[1] < 0 or wall.normal[1] > 0
        ps = generate_scene_paths(self._scene([wall]), np.array([30.0, 5.0, 1.5]))
        sides = np.dot(wall.normal, np.array([0.0, 0.0, 10.0]) - wall.corner)
        if sides <= 0:
            assert len(ps.paths) == 1


class TestPathCsv:
    def _sample_sets(self):
        rng = np.random.default_rng(89)
        sets = []
        for i in range(3):
            paths = [
                PropagationPath(
                    complex(rng.normal(), rng.normal()),
                    AnglePair(rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)),
                    AnglePair(rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)),
                )
                for _ in range(int(rng.integers(1, 4)))
            ]
            sets.append(PathSet(rng.uniform(0, 50, size=3), paths))
        return sets

    def test_round_trip_bit_exact(self):
        sets = self._sample_sets()
        buf = io.StringIO()
        export_paths_csv(sets, buf)
        text = buf.getvalue()
        back = import_paths_csv(io.StringIO(text))
        assert len(back) == len(sets)
        for orig, loaded in zip(sets, back):
            np.testing.assert_array_equal(orig.location_array, loaded.location_array)
            assert len(orig.paths) == len(loaded.paths)
            for p, q in zip(orig.paths, loaded.paths):
                assert p.gain == q.gain
                assert p.aoa.zenith == q.aoa.zenith
                assert p.aod.azimuth == q.aod.azimuth
        # a second export of the reloaded data reproduces the bytes
        buf2 = io.StringIO()
        export_paths_csv(back, buf2)
        assert buf2.getvalue() == text

    def test_header_validated(self):
        with pytest.raises(PathCsvError) as err:
            import_paths_csv(io.StringIO("x,y\n"))
        assert "header" in str(err.value).lower()

    def test_field_count_error_has_line_number(self):
        buf = io.StringIO()
        export_paths_csv(self._sample_sets(), buf)
        lines = buf.getvalue().splitlines()
        lines[1] = lines[1] + ",0.5"
        with pytest.raises(PathCsvError) as err:
            import_paths_csv(io.StringIO("\n".join(lines) + "\n"))
        assert "line 2" in str(err.value)

    def test_bad_float_error_has_line_number(self):
        buf = io.StringIO()
        export_paths_csv(self._sample_sets(), buf)
        lines = buf.getvalue().splitlines()
        parts = lines[2].split(",")
        parts[4] = "notanumber"
        lines[2] = ",".join(parts)
        with pytest.raises(PathCsvError) as err:
            import_paths_csv(io.StringIO("\n".join(lines) + "\n"))
        assert "line 3" in str(err.value)

    def test_angle_out_of_range_rejected(self):
        buf = io.StringIO()
        export_paths_csv([PathSet(np.zeros(3), [unit_path()])], buf)
        lines = buf.getvalue().splitlines()
        parts = lines[1].split(",")
        parts[6] = "4.0"  # aoa zenith beyond pi
        lines[1] = ",".join(parts)
        with pytest.raises(PathCsvError) as err:
            import_paths_csv(io.StringIO("\n".join(lines) + "\n"))
        assert "line 2" in str(err.value)

    def test_inconsistent_location_rejected(self):
        buf = io.StringIO()
        export_paths_csv(
            [PathSet(np.zeros(3), [unit_path(), unit_path(0.5 + 0j)])], buf
        )
        lines = buf.getvalue().splitlines()
        parts = lines[2].split(",")
        parts[1] = "9.5"
        lines[2] = ",".join(parts)
        with pytest.raises(PathCsvError) as err:
            import_paths_csv(io.StringIO("\n".join(lines) + "\n"))
        assert "location" in str(err.value).lower()
