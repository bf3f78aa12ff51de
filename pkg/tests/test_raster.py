import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crownfuse.raster import (
    connected_components,
    disk_element,
    distance_transform,
    find_contours,
    local_maxima,
    morphological_open,
    otsu_threshold,
)

from conftest import brute_force_distance, brute_force_otsu, disk_mask


class TestOtsu:
    def test_two_level_split(self):
        values = np.array([[50.0] * 10 + [200.0] * 10])
        assert otsu_threshold(values) == 51

    def test_alternating_extremes(self):
        values = (np.indices((4, 4)).sum(axis=0) % 2) * 255
        assert otsu_threshold(values) == 1

    def test_constant_map_is_degenerate(self):
        with pytest.raises(ValueError, match="degenerate histogram"):
            otsu_threshold(np.full((3, 3), 128.0))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="u8-normalized"):
            otsu_threshold(np.array([[300.0, 10.0]]))

    def test_matches_exhaustive_search(self, rng):
        for _ in range(40):
            h, w = rng.integers(1, 33, size=2)
            values = rng.integers(0, 256, size=(h, w)).astype(np.float64)
            if values.min() == values.max():
                continue
            assert otsu_threshold(values) == brute_force_otsu(values)


class TestMorphologicalOpen:
    def test_radius_one_disk_spans_3x3(self):
        assert disk_element(1).all()
        assert disk_element(1).shape == (3, 3)

    def test_single_pixel_removed(self):
        mask = np.zeros((5, 5), dtype=np.uint8)
        mask[2, 2] = 1
        assert not morphological_open(mask, radius=1, iterations=1).any()

    def test_solid_square_preserved(self):
        mask = np.zeros((14, 14), dtype=np.uint8)
        mask[2:12, 2:12] = 1
        assert np.array_equal(morphological_open(mask, radius=1, iterations=1), mask)

    def test_empty_mask_identity(self):
        mask = np.zeros((6, 6), dtype=np.uint8)
        assert not morphological_open(mask, radius=1, iterations=1).any()

    def test_idempotent_at_fixed_radius(self, rng):
        for radius in (1, 2):
            for iterations in (1, 2):
                mask = (rng.random((24, 24)) > 0.5).astype(np.uint8)
                once = morphological_open(mask, radius=radius, iterations=iterations)
                twice = morphological_open(once, radius=radius, iterations=iterations)
                assert np.array_equal(once, twice)

    def test_iterations_erode_deeper(self):
        # A 4x4 block survives one iteration but not two (needs a 5x5 core).
        mask = np.zeros((10, 10), dtype=np.uint8)
        mask[3:7, 3:7] = 1
        assert morphological_open(mask, radius=1, iterations=1).any()
        assert not morphological_open(mask, radius=1, iterations=2).any()


class TestDistanceTransform:
    def test_row_profile(self):
        mask = np.tile(np.array([0, 1, 1, 1, 0], dtype=np.uint8), (5, 1))
        assert distance_transform(mask)[2].tolist() == [0, 1, 2, 1, 0]

    def test_all_background(self):
        assert not distance_transform(np.zeros((4, 4), dtype=np.uint8)).any()

    def test_border_is_implicit_background(self):
        full = np.ones((5, 5), dtype=np.uint8)
        dist = distance_transform(full)
        assert dist[2, 2] == 3
        assert dist[0, 0] == 1

    def test_matches_brute_force(self, rng):
        for _ in range(30):
            h, w = rng.integers(1, 40, size=2)
            mask = (rng.random((h, w)) > rng.uniform(0.2, 0.8)).astype(np.uint8)
            assert np.array_equal(distance_transform(mask), brute_force_distance(mask))


class TestConnectedComponents:
    def test_two_blocks_raster_order(self):
        mask = np.zeros((6, 6), dtype=np.uint8)
        mask[0:2, 0:2] = 1
        mask[4:6, 4:6] = 1
        labels = connected_components(mask)
        assert labels.max() == 2
        assert labels[0, 0] == 1
        assert labels[4, 4] == 2

    def test_diagonal_is_connected(self):
        mask = np.eye(4, dtype=np.uint8)
        assert connected_components(mask).max() == 1

    def test_empty(self):
        labels = connected_components(np.zeros((3, 3), dtype=np.uint8))
        assert labels.max() == 0

    def test_labels_contiguous(self, rng):
        mask = (rng.random((30, 30)) > 0.7).astype(np.uint8)
        labels = connected_components(mask)
        present = np.unique(labels)
        assert present[0] == 0
        assert present[-1] == len(present) - 1
        # every labeled pixel was foreground
        assert not ((labels > 0) & (mask == 0)).any()


class TestFindContours:
    def test_block_contour(self):
        mask = np.zeros((4, 4), dtype=np.uint8)
        mask[1:3, 1:3] = 1
        contours = find_contours(mask)
        assert len(contours) == 1
        assert contours[0].bounding_rect == (1, 1, 2, 2)

    def test_empty(self):
        assert find_contours(np.zeros((4, 4), dtype=np.uint8)) == []

    def test_two_blocks_in_raster_order(self):
        mask = np.zeros((8, 8), dtype=np.uint8)
        mask[5:7, 1:3] = 1
        mask[1:3, 5:7] = 1
        contours = find_contours(mask)
        assert len(contours) == 2
        assert contours[0].bounding_rect == (5, 1, 2, 2)
        assert contours[1].bounding_rect == (1, 5, 2, 2)

    def test_single_pixel(self):
        mask = np.zeros((3, 3), dtype=np.uint8)
        mask[1, 1] = 1
        contours = find_contours(mask)
        assert contours[0].points == ((1, 1),)
        assert contours[0].bounding_rect == (1, 1, 1, 1)

    def test_hole_borders_excluded(self):
        mask = np.ones((7, 7), dtype=np.uint8)
        mask[2:5, 2:5] = 0
        contours = find_contours(mask)
        assert len(contours) == 1
        assert contours[0].bounding_rect == (0, 0, 7, 7)

    def test_points_8_adjacent(self):
        mask = disk_mask((20, 20), [(9, 9, 6)])
        contour = find_contours(mask)[0]
        pts = contour.points
        for a, b in zip(pts, pts[1:]):
            assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1

    def test_rects_match_component_extents(self, rng):
        for _ in range(25):
            mask = (rng.random((24, 24)) > 0.72).astype(np.uint8)
            labels = connected_components(mask)
            contours = find_contours(mask)
            assert len(contours) == labels.max()
            for lab, contour in zip(range(1, labels.max() + 1), contours):
                ys, xs = np.nonzero(labels == lab)
                expected = (xs.min(), ys.min(), xs.max() - xs.min() + 1,
                            ys.max() - ys.min() + 1)
                assert contour.bounding_rect == tuple(int(v) for v in expected)


class TestLocalMaxima:
    def test_unique_peak(self):
        grid = np.array([[1, 2, 1], [2, 5, 2], [1, 2, 1]], dtype=np.float64)
        assert local_maxima(grid, 0) == [(1, 1)]

    def test_constant_has_none(self):
        assert local_maxima(np.full((5, 5), 3.0), 0) == []

    def test_two_peaks(self):
        grid = np.ones((3, 7))
        grid[1, 1] = 5
        grid[1, 5] = 5
        assert local_maxima(grid, 0) == [(1, 1), (5, 1)]

    def test_min_value_filters(self):
        grid = np.zeros((5, 5))
        grid[1, 1] = 2
        grid[3, 3] = 6
        assert local_maxima(grid, 3) == [(3, 3)]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(3, 10), st.integers(3, 10), st.integers(0, 1000),
           st.floats(0.0, 50.0))
    def test_shift_invariance(self, h, w, seed, shift):
        grid = np.random.default_rng(seed).random((h, w)) * 10
        base = local_maxima(grid, 1.0)
        shifted = local_maxima(grid + shift, 1.0 + shift)
        assert base == shifted
