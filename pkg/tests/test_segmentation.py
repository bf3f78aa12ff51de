import numpy as np
import pytest

from crownfuse.raster import connected_components, distance_transform
from crownfuse.segmentation import extract_centers, watershed_split

from conftest import disk_mask


def cross_mask(shape, centers):
    """City-block balls of radius 1; each has a strict distance peak of 2."""
    mask = np.zeros(shape, dtype=np.uint8)
    for cx, cy in centers:
        mask[cy, cx] = 1
        mask[cy - 1, cx] = mask[cy + 1, cx] = 1
        mask[cy, cx - 1] = mask[cy, cx + 1] = 1
    return mask


class TestWatershedSplit:
    def test_disjoint_disks_match_components(self):
        mask = disk_mask((40, 40), [(10, 10, 6), (30, 28, 6)])
        assert np.array_equal(watershed_split(mask), connected_components(mask))

    def test_dumbbell_splits_in_two(self):
        mask = disk_mask((40, 40), [(13, 20, 7), (25, 20, 7)])
        labels = watershed_split(mask)
        assert labels.max() == 2
        # ridge separates the two centers
        assert labels[20, 13] != labels[20, 25]

    def test_solid_disk_single_label(self):
        mask = disk_mask((30, 30), [(15, 15, 9)])
        labels = watershed_split(mask)
        assert labels.max() == 1

    def test_empty_mask(self):
        assert not watershed_split(np.zeros((5, 5), dtype=np.uint8)).any()

    def test_every_foreground_pixel_labeled(self, rng):
        for _ in range(15):
            mask = (rng.random((30, 30)) > 0.6).astype(np.uint8)
            labels = watershed_split(mask)
            assert ((labels > 0) == mask.astype(bool)).all()

    def test_label_count_at_least_components(self, rng):
        for _ in range(15):
            mask = (rng.random((25, 25)) > 0.55).astype(np.uint8)
            labels = watershed_split(mask)
            assert labels.max() >= connected_components(mask).max()

    def test_plateau_component_still_labeled(self):
        # 2x2 block: uniform distance 1, no strict maximum; fallback marker.
        mask = np.zeros((6, 6), dtype=np.uint8)
        mask[2:4, 2:4] = 1
        labels = watershed_split(mask)
        assert labels.max() == 1
        assert ((labels > 0) == mask.astype(bool)).all()

    def test_deterministic(self, rng):
        mask = (rng.random((40, 40)) > 0.5).astype(np.uint8)
        assert np.array_equal(watershed_split(mask), watershed_split(mask))


class TestExtractCenters:
    def test_small_segment_averages_maxima(self):
        # Two radius-1 city-block balls linked diagonally: one 8-connected
        # segment of area 10 with strict distance peaks at (10,10) and (12,12).
        mask = cross_mask((24, 24), [(10, 10), (12, 12)])
        labels = watershed_split(mask)
        dist = distance_transform(mask)
        # force a single segment for the averaging rule
        merged = (labels > 0).astype(np.int32)
        result = extract_centers(merged, dist, th_area=64, th_dist=8)
        assert len(result.centers) == 1
        assert (result.centers[0].x, result.centers[0].y) == (11, 11)
        assert result.centers[0].source == "traditional"

    def test_large_segment_keeps_far_maxima(self):
        mask = cross_mask((24, 60), [(10, 10), (40, 10)])
        mask[10, 11:40] = 1  # thin bridge keeps one component
        labels = connected_components(mask).astype(np.int32)
        dist = distance_transform(mask)
        result = extract_centers(labels, dist, th_area=20, th_dist=8)
        assert len(result.centers) == 2
        xs = sorted(c.x for c in result.centers)
        assert xs == [10, 40]

    def test_single_maximum_is_the_center(self):
        mask = disk_mask((30, 30), [(14, 15, 8)])
        labels = watershed_split(mask)
        result = extract_centers(labels, distance_transform(mask), th_area=64, th_dist=8)
        assert len(result.centers) == 1
        assert (result.centers[0].x, result.centers[0].y) == (14, 15)

    def test_close_maxima_merge_in_large_segment(self):
        mask = cross_mask((24, 40), [(10, 10), (14, 10)])
        mask[10, 11:14] = 1
        labels = connected_components(mask).astype(np.int32)
        result = extract_centers(labels, distance_transform(mask), th_area=5, th_dist=8)
        assert len(result.centers) == 1
        assert (result.centers[0].x, result.centers[0].y) == (12, 10)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            extract_centers(np.zeros((3, 3), dtype=np.int32), np.zeros((4, 4)))

    def test_segments_carry_contours_and_areas(self):
        mask = disk_mask((40, 40), [(12, 12, 6), (30, 30, 5)])
        labels = watershed_split(mask)
        result = extract_centers(labels, distance_transform(mask))
        assert len(result.segments) == 2
        for seg in result.segments:
            assert seg.area == int((labels == seg.label).sum())
            x, y, w, h = seg.contour.bounding_rect
            ys, xs = np.nonzero(labels == seg.label)
            assert (x, y) == (xs.min(), ys.min())
            assert (w, h) == (xs.max() - xs.min() + 1, ys.max() - ys.min() + 1)
            for mx, my in seg.maxima:
                assert labels[my, mx] == seg.label

    def test_at_least_one_center_per_segment(self, rng):
        for _ in range(10):
            mask = (rng.random((30, 30)) > 0.6).astype(np.uint8)
            if not mask.any():
                continue
            labels = watershed_split(mask)
            result = extract_centers(labels, distance_transform(mask))
            covered = {c.segment_label for c in result.centers}
            assert covered == set(range(1, labels.max() + 1))

    def test_k_disk_scene_property(self, rng):
        # K well-separated disks: exactly K centers, each within radius/2.
        disks = [(20, 20, 7), (60, 24, 10), (30, 60, 5), (70, 70, 8)]
        mask = disk_mask((96, 96), disks)
        labels = watershed_split(mask)
        result = extract_centers(labels, distance_transform(mask))
        assert len(result.centers) == len(disks)
        for cx, cy, r in disks:
            assert any((c.x - cx) ** 2 + (c.y - cy) ** 2 <= (r / 2) ** 2
                       for c in result.centers)
