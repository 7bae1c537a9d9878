import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from tilestream.errors import InvalidInput
from tilestream.media import (
    BitrateLadder,
    Box,
    ChunkTimeline,
    GazePoint,
    TileGrid,
    ViewportRect,
    box_tiles,
    gaze_from_quaternion,
    viewport_tiles,
    wrap_yaw,
)

from .helpers import quaternion_from_gaze


def scipy_gaze(rot: Rotation):
    """Rotation-matrix oracle: rotate the forward axis and read off the angles."""
    fx, fy, fz = rot.apply([1.0, 0.0, 0.0])
    return math.atan2(fy, fx), math.asin(max(-1.0, min(1.0, fz)))


def as_wxyz(rot: Rotation):
    x, y, z, w = rot.as_quat()
    return (w, x, y, z)


def sample_viewport(v: ViewportRect, g: TileGrid, n_yaw=200, n_pitch=100):
    """Dense-lattice oracle: map cell midpoints of the viewport to tiles."""
    tiles = set()
    for i in range(n_yaw):
        yaw = v.center.yaw - v.fov_yaw / 2 + (i + 0.5) * v.fov_yaw / n_yaw
        for k in range(n_pitch):
            pitch = v.center.pitch - v.fov_pitch / 2 + (k + 0.5) * v.fov_pitch / n_pitch
            if abs(pitch) > math.pi / 2:
                continue
            u = ((yaw + math.pi) / (2 * math.pi)) % 1.0
            vv = (math.pi / 2 - pitch) / math.pi
            col = min(int(u * g.cols), g.cols - 1)
            row = min(int(vv * g.rows), g.rows - 1)
            tiles.add(row * g.cols + col)
    return frozenset(tiles)


def rasterize_box(box: Box, g: TileGrid):
    """Brute-force oracle: every pixel overlapping the box claims its tile."""
    W, H = g.frame_width_px, g.frame_height_px
    tiles = set()
    x_end = box.x + box.w
    for py in range(H):
        if not (py < (box.y + box.h) * H and py + 1 > box.y * H):
            continue
        for px in range(W):
            inside = px < min(x_end, 1.0) * W and px + 1 > box.x * W
            if x_end > 1.0:
                inside = inside or px < (x_end - 1.0) * W
            if inside:
                tiles.add((py * g.rows // H) * g.cols + px * g.cols // W)
    return frozenset(tiles)


class TestTypes:
    def test_grid_defaults_and_row_major(self):
        g = TileGrid()
        assert (g.rows, g.cols, g.n_tiles) == (8, 8, 64)
        assert g.index(2, 3) == 19
        assert g.row_col(19) == (2, 3)

    @pytest.mark.parametrize("rows,cols", [(0, 8), (8, 0)])
    def test_grid_rejects_empty(self, rows, cols):
        with pytest.raises(InvalidInput):
            TileGrid(rows, cols)

    @pytest.mark.parametrize("rows,cols,w,h", [(8, 8, 64, 32), (3, 5, 37, 11), (16, 16, 50, 20)])
    def test_tile_partition_covers_frame_once(self, rows, cols, w, h):
        g = TileGrid(rows, cols, w, h)
        counts = np.zeros((h, w), dtype=int)
        for t in range(g.n_tiles):
            x0, y0, x1, y1 = g.tile_pixel_rect(t)
            counts[y0:y1, x0:x1] += 1
        assert (counts == 1).all()
        # rect bounds agree with the pixel-to-tile map
        for py in range(h):
            for px in range(w):
                x0, y0, x1, y1 = g.tile_pixel_rect(g.tile_of_pixel(px, py))
                assert x0 <= px < x1 and y0 <= py < y1

    def test_ladder_defaults(self):
        lad = BitrateLadder()
        assert lad.levels == (0.0, 1.0, 5.0, 8.0, 16.0, 35.0)
        assert lad.tile_megabits(1, 1.0, 64) == 1 / 64

    @pytest.mark.parametrize("levels", [(1, 2), (0, 5, 5), (0,), (0, 3, 2)])
    def test_ladder_invariants(self, levels):
        with pytest.raises(InvalidInput):
            BitrateLadder(levels)

    def test_timeline(self):
        tl = ChunkTimeline(1.0, 3, 4)
        assert tl.total_frames == 12
        np.testing.assert_allclose(tl.frame_times(1), [1.0, 1.25, 1.5, 1.75])
        with pytest.raises(InvalidInput):
            ChunkTimeline(0.0, 3, 4)

    def test_gaze_ranges(self):
        with pytest.raises(InvalidInput):
            GazePoint(math.pi, 0.0)
        assert GazePoint.normalized(math.pi, 0.0).yaw == -math.pi
        assert GazePoint.normalized(0.0, 2.0).pitch == math.pi / 2

    def test_wrap_yaw_range(self):
        for a in np.linspace(-20, 20, 4001):
            w = wrap_yaw(a)
            assert -math.pi <= w < math.pi
            assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


class TestQuaternion:
    def test_identity(self):
        g = gaze_from_quaternion((1, 0, 0, 0))
        assert (g.yaw, g.pitch) == (0.0, 0.0)

    def test_yaw_90(self):
        rot = Rotation.from_euler("z", 90, degrees=True)
        g = gaze_from_quaternion(as_wxyz(rot))
        yaw, pitch = scipy_gaze(rot)
        assert yaw == pytest.approx(math.pi / 2, abs=1e-12)
        assert g.yaw == pytest.approx(yaw, abs=1e-12)
        assert g.pitch == pytest.approx(0.0, abs=1e-12)

    def test_pitch_up_45(self):
        # pitching the nose up is a negative rotation about +y
        rot = Rotation.from_euler("y", -45, degrees=True)
        yaw, pitch = scipy_gaze(rot)
        assert pitch == pytest.approx(math.pi / 4, abs=1e-12)
        g = gaze_from_quaternion(as_wxyz(rot))
        assert g.yaw == pytest.approx(0.0, abs=1e-12)
        assert g.pitch == pytest.approx(math.pi / 4, abs=1e-12)

    def test_zero_quaternion_rejected(self):
        with pytest.raises(InvalidInput):
            gaze_from_quaternion((0, 0, 0, 0))

    def test_non_unit_is_normalized(self):
        rot = Rotation.from_euler("zy", [30, -20], degrees=True)
        q = np.array(as_wxyz(rot)) * 3.7
        g = gaze_from_quaternion(q)
        yaw, pitch = scipy_gaze(rot)
        assert g.yaw == pytest.approx(yaw, abs=1e-12)
        assert g.pitch == pytest.approx(pitch, abs=1e-12)

    def test_matches_rotation_oracle_random(self):
        rots = Rotation.random(500, random_state=7)
        for rot in rots:
            g = gaze_from_quaternion(as_wxyz(rot))
            yaw, pitch = scipy_gaze(rot)
            assert g.pitch == pytest.approx(pitch, abs=1e-9)
            if abs(pitch) < math.pi / 2 - 1e-6:
                assert abs(wrap_yaw(g.yaw - yaw)) < 1e-9

    @settings(max_examples=300, deadline=None)
    @given(
        yaw=st.floats(-math.pi, math.pi, exclude_max=True),
        pitch=st.floats(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6),
    )
    def test_round_trip(self, yaw, pitch):
        g = gaze_from_quaternion(quaternion_from_gaze(GazePoint(yaw, pitch)))
        assert abs(wrap_yaw(g.yaw - yaw)) < 1e-9
        assert abs(g.pitch - pitch) < 1e-9


class TestViewportTiles:
    def test_full_sphere(self):
        g = TileGrid()
        v = ViewportRect(GazePoint(0.3, 0.2), 2 * math.pi, math.pi)
        assert viewport_tiles(v, g) == g.all_tiles()

    def test_centered_default_fov_matches_sampling(self):
        g = TileGrid()
        v = ViewportRect(GazePoint(0.0, 0.0), math.radians(110), math.radians(90))
        got = viewport_tiles(v, g)
        assert got == sample_viewport(v, g)
        # 4 columns x 4 rows around the frame centre
        assert got == frozenset(r * 8 + c for r in range(2, 6) for c in range(2, 6))

    def test_seam_wrap(self):
        g = TileGrid()
        v = ViewportRect(GazePoint(math.pi - 0.01, 0.0), math.radians(90), math.radians(90))
        got = viewport_tiles(v, g)
        assert got == sample_viewport(v, g)
        cols = {t % 8 for t in got}
        assert 0 in cols and 7 in cols

    def test_pole_clamped(self):
        g = TileGrid()
        v = ViewportRect(GazePoint(0.0, math.pi / 2), math.radians(110), math.radians(90))
        got = viewport_tiles(v, g)
        assert got == sample_viewport(v, g)
        assert {t // 8 for t in got} == {0, 1}

    def test_random_against_sampling(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            g = TileGrid(int(rng.integers(2, 17)), int(rng.integers(2, 17)))
            v = ViewportRect(
                GazePoint(rng.uniform(-math.pi, math.pi), rng.uniform(-1.5, 1.5)),
                rng.uniform(0.3, 4.0),
                rng.uniform(0.3, 2.5),
            )
            got = viewport_tiles(v, g)
            oracle = sample_viewport(v, g, 400, 200)
            # lattice can miss thin slivers; never the reverse
            assert oracle <= got
            assert len(got - oracle) <= g.rows + g.cols

    @settings(max_examples=200, deadline=None)
    @given(
        yaw=st.floats(-math.pi, math.pi, exclude_max=True),
        pitch=st.floats(-math.pi / 2, math.pi / 2),
        fy=st.floats(0.05, 6.0),
        fp=st.floats(0.05, 3.0),
        dy=st.floats(0.0, 1.0),
        dp=st.floats(0.0, 1.0),
    )
    def test_monotone_in_fov(self, yaw, pitch, fy, fp, dy, dp):
        g = TileGrid()
        small = viewport_tiles(ViewportRect(GazePoint(yaw, pitch), fy, fp), g)
        big = viewport_tiles(
            ViewportRect(GazePoint(yaw, pitch), min(fy + dy, 2 * math.pi), min(fp + dp, math.pi)), g
        )
        assert small and small <= big


class TestBoxTiles:
    def test_full_frame(self):
        g = TileGrid()
        assert box_tiles(Box(0, 0, 1, 1), g) == g.all_tiles()

    def test_aligned_box(self):
        g = TileGrid()
        assert box_tiles(Box(3 / 8, 2 / 8, 1 / 8, 1 / 8), g) == {g.index(2, 3)}

    def test_wrapping_box(self):
        g = TileGrid()
        got = box_tiles(Box(0.9, 0.4, 0.2, 0.1), g)
        assert got == {g.index(3, 7), g.index(3, 0)}
        small = TileGrid(8, 8, 160, 80)
        assert box_tiles(Box(0.9, 0.4, 0.2, 0.1), small) == rasterize_box(Box(0.9, 0.4, 0.2, 0.1), small)

    @pytest.mark.parametrize("w,h", [(0, 0.1), (0.1, 0), (-0.1, 0.2)])
    def test_degenerate_is_empty(self, w, h):
        assert box_tiles(Box(0.2, 0.2, w, h), TileGrid()) == frozenset()

    def test_out_of_frame_rejected(self):
        with pytest.raises(InvalidInput):
            box_tiles(Box(0.2, 0.8, 0.1, 0.3), TileGrid())

    def test_random_against_rasterization(self):
        rng = np.random.default_rng(11)
        grids = [TileGrid(8, 8, 64, 32), TileGrid(5, 7, 53, 29), TileGrid(4, 6, 60, 40)]
        for i in range(1000):
            g = grids[i % len(grids)]
            y = rng.uniform(0, 0.99)
            box = Box(rng.uniform(0, 1), y, rng.uniform(0.001, 1.0), rng.uniform(0.001, 1 - y))
            assert box_tiles(box, g) == rasterize_box(box, g), box
