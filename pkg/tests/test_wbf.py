import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crownfuse.wbf import DetectionBox, WbfConfig, fuse, iou


def box(model_id, x1, y1, x2, y2, score):
    return DetectionBox(model_id=model_id, x1=x1, y1=y1, x2=x2, y2=y2, score=score)


def naive_fuse(detections, n_models, prefilter=0.05, iou_thr=0.55):
    """Reference fuser written straight from the fusion equations.

    Deliberately independent: plain lists, explicit loops, coordinates
    recomputed from scratch on every insertion.
    """
    def naive_iou(a, b):
        w = min(a[2], b[2]) - max(a[0], b[0])
        h = min(a[3], b[3]) - max(a[1], b[1])
        if w <= 0 or h <= 0:
            return 0.0
        inter = w * h
        ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
        return inter / ua

    indexed = [(i, d) for i, d in enumerate(detections) if d.score >= prefilter]
    indexed.sort(key=lambda p: (-p[1].score, p[1].model_id, p[0]))
    clusters = []  # each: list of boxes
    extents = []
    for _, d in indexed:
        placed = False
        for ci, extent in enumerate(extents):
            if naive_iou(extent, (d.x1, d.y1, d.x2, d.y2)) >= iou_thr:
                clusters[ci].append(d)
                members = clusters[ci]
                total = sum(m.score for m in members)
                extents[ci] = (
                    sum(m.score * m.x1 for m in members) / total,
                    sum(m.score * m.y1 for m in members) / total,
                    sum(m.score * m.x2 for m in members) / total,
                    sum(m.score * m.y2 for m in members) / total,
                )
                placed = True
                break
        if not placed:
            clusters.append([d])
            extents.append((d.x1, d.y1, d.x2, d.y2))
    out = []
    for members, extent in zip(clusters, extents):
        raw = max(m.score for m in members)
        t = len(members)
        out.append((extent, raw * min(t, n_models) / n_models, t))
    out.sort(key=lambda item: -item[1])
    return out


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n_models = int(rng.integers(1, 5))
    n_boxes = int(rng.integers(0, 21))
    boxes = []
    for _ in range(n_boxes):
        x1, y1 = rng.uniform(0.0, 0.8, 2)
        w, h = rng.uniform(0.05, 0.2, 2)
        boxes.append(box(int(rng.integers(0, n_models)), x1, y1,
                         min(1.0, x1 + w), min(1.0, y1 + h),
                         float(rng.uniform(0.01, 1.0))))
    return boxes, n_models


class TestIou:
    def test_identical(self):
        assert iou((0.1, 0.1, 0.3, 0.3), (0.1, 0.1, 0.3, 0.3)) == 1.0

    def test_disjoint(self):
        assert iou((0.0, 0.0, 0.1, 0.1), (0.5, 0.5, 0.6, 0.6)) == 0.0

    def test_one_seventh(self):
        value = iou((0.10, 0.10, 0.30, 0.30), (0.20, 0.20, 0.40, 0.40))
        assert value == pytest.approx(1 / 7, abs=1e-12)


class TestFuse:
    def test_single_box_identity(self):
        fused = fuse([box(0, 0.1, 0.1, 0.3, 0.3, 0.9)], n_models=1)
        assert len(fused) == 1
        assert fused[0].extent == (0.1, 0.1, 0.3, 0.3)
        assert fused[0].score == pytest.approx(0.9)

    def test_two_box_cluster_arithmetic(self):
        fused = fuse([box(0, 0.10, 0.10, 0.30, 0.30, 0.8),
                      box(1, 0.12, 0.12, 0.32, 0.32, 0.4)], n_models=2)
        assert len(fused) == 1
        f = fused[0]
        assert f.x1 == pytest.approx(0.128 / 1.2, abs=1e-12)
        assert f.y1 == pytest.approx(0.128 / 1.2, abs=1e-12)
        assert f.x2 == pytest.approx(0.368 / 1.2, abs=1e-12)
        assert f.y2 == pytest.approx(0.368 / 1.2, abs=1e-12)
        assert f.score == pytest.approx(0.8)
        assert f.cluster_size == 2

    def test_lone_cluster_rescaled(self):
        fused = fuse([box(0, 0.1, 0.1, 0.2, 0.2, 0.9)], n_models=3)
        assert fused[0].score == pytest.approx(0.3)

    def test_empty_input(self):
        assert fuse([], n_models=2) == []

    def test_invalid_model_id(self):
        with pytest.raises(ValueError, match="model_id"):
            fuse([box(5, 0.1, 0.1, 0.2, 0.2, 0.5)], n_models=2)

    def test_prefilter_drops_low_scores(self):
        fused = fuse([box(0, 0.1, 0.1, 0.2, 0.2, 0.01)], n_models=1)
        assert fused == []

    def test_mean_score_mode(self):
        cfg = WbfConfig(score_mode="mean")
        fused = fuse([box(0, 0.10, 0.10, 0.30, 0.30, 0.8),
                      box(1, 0.10, 0.10, 0.30, 0.30, 0.4)], n_models=2, config=cfg)
        assert fused[0].score == pytest.approx(0.6)

    def test_distinct_model_count_mode(self):
        cfg = WbfConfig(count_distinct_models=True)
        boxes = [box(0, 0.10, 0.10, 0.30, 0.30, 0.9),
                 box(0, 0.11, 0.11, 0.31, 0.31, 0.8)]
        fused = fuse(boxes, n_models=2, config=cfg)
        assert fused[0].cluster_size == 2
        assert fused[0].score == pytest.approx(0.9 * 1 / 2)

    def test_matches_naive_fuser(self):
        for seed in range(50):
            boxes, n_models = random_instance(seed)
            fused = fuse(boxes, n_models=n_models)
            expected = naive_fuse(boxes, n_models)
            assert len(fused) == len(expected)
            for got, (extent, score, t) in zip(fused, expected):
                assert got.cluster_size == t
                assert got.score == pytest.approx(score, abs=1e-9)
                for a, b in zip(got.extent, extent):
                    assert a == pytest.approx(b, abs=1e-9)

    def test_fused_coordinates_inside_member_hull(self):
        for seed in range(20):
            boxes, n_models = random_instance(seed + 100)
            if not boxes:
                continue
            cfg = WbfConfig(prefilter_score=0.0)
            for f in fuse(boxes, n_models=n_models, config=cfg):
                lo = [min(getattr(b, c) for b in boxes) for c in ("x1", "y1", "x2", "y2")]
                hi = [max(getattr(b, c) for b in boxes) for c in ("x1", "y1", "x2", "y2")]
                for v, a, b in zip(f.extent, lo, hi):
                    assert a - 1e-12 <= v <= b + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_rescaling_never_raises_score(self, seed):
        boxes, n_models = random_instance(seed)
        for f in fuse(boxes, n_models=n_models):
            raw_max = max(b.score for b in boxes)
            assert f.score <= raw_max + 1e-12
            if f.cluster_size >= n_models:
                # equality with its own cluster's raw max
                assert f.score <= raw_max + 1e-12

    def test_final_equals_raw_iff_full_cluster(self):
        full = fuse([box(0, 0.1, 0.1, 0.3, 0.3, 0.9),
                     box(1, 0.1, 0.1, 0.3, 0.3, 0.7)], n_models=2)
        assert full[0].score == pytest.approx(0.9)
        partial = fuse([box(0, 0.1, 0.1, 0.3, 0.3, 0.9)], n_models=2)
        assert partial[0].score == pytest.approx(0.45)

    def test_uniform_score_scaling_keeps_coordinates(self):
        boxes, n_models = random_instance(7)
        cfg = WbfConfig(prefilter_score=0.0)
        base = fuse(boxes, n_models=n_models, config=cfg)
        scaled_boxes = [box(b.model_id, b.x1, b.y1, b.x2, b.y2, b.score * 0.5)
                        for b in boxes]
        scaled = fuse(scaled_boxes, n_models=n_models, config=cfg)
        for a, b in zip(base, scaled):
            for u, v in zip(a.extent, b.extent):
                assert u == pytest.approx(v, abs=1e-12)

    def test_equal_score_permutation_stable(self):
        # Equal scores across different models: the model_id tie-break restores
        # a canonical order, so input permutation cannot change the result.
        boxes = [box(0, 0.10, 0.10, 0.30, 0.30, 0.8),
                 box(1, 0.50, 0.50, 0.70, 0.70, 0.8),
                 box(2, 0.12, 0.12, 0.32, 0.32, 0.8),
                 box(3, 0.52, 0.52, 0.72, 0.72, 0.8)]
        base = fuse(boxes, n_models=4)
        shuffled = fuse(boxes[::-1], n_models=4)
        got = sorted((f.extent for f in base))
        expected = sorted((f.extent for f in shuffled))
        for a, b in zip(got, expected):
            for u, v in zip(a, b):
                assert u == pytest.approx(v, abs=1e-9)

    def test_output_sorted_by_score(self):
        boxes, n_models = random_instance(3)
        fused = fuse(boxes, n_models=n_models)
        scores = [f.score for f in fused]
        assert scores == sorted(scores, reverse=True)
