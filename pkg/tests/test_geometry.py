import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualweight.geometry import (
    AnchorPoint,
    BoundaryDeltas,
    Box,
    OffsetVector,
    boundary_points,
    decode_box,
    encode_offsets,
    giou,
    iou,
    pairwise_iou,
    refine_offset_map,
    refine_offsets,
    sample_map,
)

from oracles import bilinear, box_iou_scalar, refine_cell

coord = st.floats(-50, 50, allow_nan=False)
extent = st.floats(0.5, 40, allow_nan=False)


@st.composite
def boxes(draw):
    x, y = draw(coord), draw(coord)
    return Box(x, y, x + draw(extent), y + draw(extent))


class TestIou:
    def test_identical(self):
        assert iou(Box(0, 0, 1, 1), Box(0, 0, 1, 1)) == 1.0

    def test_disjoint(self):
        assert iou(Box(0, 0, 1, 1), Box(2, 2, 3, 3)) == 0.0

    def test_hand_value(self):
        assert iou(Box(0, 0, 2, 2), Box(1, 1, 3, 3)) == pytest.approx(1 / 7, abs=1e-15)

    def test_degenerate_is_zero(self):
        assert iou(Box(1, 1, 1, 1), Box(1, 1, 1, 1)) == 0.0
        assert iou(Box(0, 0, 0, 5), Box(0, 0, 2, 5)) == 0.0

    @given(boxes(), boxes())
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0
        assert v == pytest.approx(box_iou_scalar(a, b), abs=1e-12)

    @given(boxes())
    def test_self_overlap(self, a):
        assert iou(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_one_only_for_identical(self):
        assert iou(Box(0, 0, 2, 2), Box(0, 0, 2, 2.001)) < 1.0

    def test_pairwise_matches_elementwise(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(0, 10, (5, 2))
        a = np.concatenate([a, a + rng.uniform(1, 5, (5, 2))], axis=1)
        b = a[::-1] + 0.5
        m = pairwise_iou(a, b)
        for r in range(5):
            for c in range(5):
                assert m[r, c] == pytest.approx(box_iou_scalar(a[r], b[c]), abs=1e-12)


class TestGiou:
    def test_identical(self):
        assert giou(Box(0, 0, 3, 4), Box(0, 0, 3, 4)) == 1.0

    def test_hand_value(self):
        assert giou(Box(0, 0, 2, 2), Box(1, 1, 3, 3)) == pytest.approx(-5 / 63, abs=1e-15)

    def test_far_apart_approaches_minus_one(self):
        assert giou(Box(0, 0, 1, 1), Box(1000, 1000, 1001, 1001)) < -0.999

    @given(boxes(), boxes())
    def test_not_above_iou(self, a, b):
        v = giou(a, b)
        assert v <= iou(a, b) + 1e-12
        assert -1.0 - 1e-12 <= v <= 1.0

    def test_equals_iou_when_nested(self):
        outer, inner = Box(0, 0, 10, 10), Box(2, 2, 5, 5)
        assert giou(outer, inner) == pytest.approx(iou(outer, inner))


class TestDecode:
    def test_unit_offsets(self):
        np.testing.assert_array_equal(decode_box(AnchorPoint(0, 0, 1), OffsetVector(1, 1, 1, 1)), [-1, -1, 1, 1])

    def test_zero_offsets_point_box(self):
        np.testing.assert_array_equal(decode_box(AnchorPoint(2, 3, 4), [0, 0, 0, 0]), [12, 8, 12, 8])

    def test_stride_scales(self):
        np.testing.assert_array_equal(decode_box(AnchorPoint(1, 1, 8), [1, 0.5, 2, 0]), [0, 4, 24, 8])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            decode_box(AnchorPoint(0, 0, 1), [1, -0.1, 1, 1])

    def test_encode_outside_rejected(self):
        with pytest.raises(ValueError):
            encode_offsets(AnchorPoint(0, 0, 1), Box(1, 1, 2, 2))

    def test_encode_mirror(self):
        np.testing.assert_array_equal(encode_offsets(AnchorPoint(0, 0, 1), Box(-1, -1, 1, 1)), [1, 1, 1, 1])

    @given(boxes(), st.floats(0, 1), st.floats(0, 1), st.sampled_from([1.0, 4.0, 8.0]))
    def test_round_trip(self, box, fx, fy, stride):
        x = box.x1 + fx * (box.x2 - box.x1)
        y = box.y1 + fy * (box.y2 - box.y1)
        anchor = AnchorPoint(y / stride, x / stride, stride)
        try:
            o = encode_offsets(anchor, box)
        except ValueError:
            # rounding placed the point a hair outside the box
            return
        np.testing.assert_allclose(decode_box(anchor, o), box, atol=1e-9)

    def test_vectorized_anchors(self):
        a = AnchorPoint(np.array([0.0, 1.0]), np.array([0.0, 2.0]), np.array([1.0, 2.0]))
        out = decode_box(a, np.ones((2, 4)))
        np.testing.assert_array_equal(out, [[-1, -1, 1, 1], [2, 0, 6, 4]])


class TestBoundaryPoints:
    def test_zero_deltas_side_midpoints(self):
        a = AnchorPoint(5, 5)
        o = OffsetVector(2, 1, 3, 4)
        pts = boundary_points(a, o, BoundaryDeltas(*[0.0] * 8))
        # (row, col) of left, top, right, bottom side centers through the anchor
        np.testing.assert_array_equal(pts, [[5, 3], [4, 5], [5, 8], [9, 5]])

    def test_left_point_substitution(self):
        pts = boundary_points(AnchorPoint(5, 5), [2, 0, 0, 0], np.zeros(8))
        np.testing.assert_array_equal(pts[0], [5, 3])

    def test_y_delta_moves_left_point_vertically_only(self):
        base = boundary_points(AnchorPoint(5, 5), [2, 1, 1, 1], np.zeros(8))
        d = np.zeros(8)
        d[1] = 0.7
        moved = boundary_points(AnchorPoint(5, 5), [2, 1, 1, 1], d)
        np.testing.assert_allclose(moved[0], base[0] + [0.7, 0])
        np.testing.assert_array_equal(moved[1:], base[1:])

    def test_each_delta_slot(self):
        o = np.array([1.0, 2.0, 3.0, 4.0])
        d = np.arange(1, 9) / 10
        pts = boundary_points(AnchorPoint(10, 20), o, d)
        expected = [
            (10 + 0.2, 20 - 1 + 0.1),
            (10 - 2 + 0.4, 20 + 0.3),
            (10 + 0.6, 20 + 3 + 0.5),
            (10 + 4 + 0.8, 20 + 0.7),
        ]
        np.testing.assert_allclose(pts, expected)


class TestSampleMap:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.m = rng.normal(size=(5, 6, 4))

    def test_lattice_exact(self):
        assert sample_map(self.m, [2, 3], 1) == pytest.approx(self.m[2, 3, 1], abs=1e-15)

    def test_midpoint_mean(self):
        v = sample_map(self.m, [1, 2.5], 0)
        assert v == pytest.approx(0.5 * (self.m[1, 2, 0] + self.m[1, 3, 0]), abs=1e-14)

    def test_constant(self):
        m = np.full((4, 4, 4), 2.5)
        pts = np.random.default_rng(0).uniform(-2, 6, (20, 2))
        np.testing.assert_allclose(sample_map(m, pts, 3), 2.5)

    def test_linear_along_axis(self):
        vals = [sample_map(self.m, [2, c], 2) for c in np.linspace(1, 2, 5)]
        np.testing.assert_allclose(np.diff(vals, 2), 0, atol=1e-12)

    def test_clamped_border(self):
        assert sample_map(self.m, [-3, 100], 0) == pytest.approx(self.m[0, 5, 0])

    def test_matches_oracle(self):
        pts = np.random.default_rng(1).uniform(-1, 7, (50, 2))
        got = sample_map(self.m, pts, 2)
        grid = self.m[..., 2].tolist()
        np.testing.assert_allclose(got, [bilinear(grid, r, c) for r, c in pts], atol=1e-12)


class TestRefine:
    def test_constant_field_doubles(self):
        o = np.array([1.5, 2.0, 0.5, 3.0])
        omap = np.broadcast_to(o, (6, 7, 4)).copy()
        out = refine_offset_map(omap, np.zeros((6, 7, 8)))
        np.testing.assert_allclose(out, np.broadcast_to(2 * o, out.shape))

    def test_zero_field_zero(self):
        out = refine_offset_map(np.zeros((3, 3, 4)), np.zeros((3, 3, 8)))
        np.testing.assert_array_equal(out, 0)

    @pytest.mark.parametrize("sign", ["paper", "derived"])
    def test_matches_per_cell_oracle(self, sign):
        rng = np.random.default_rng(11)
        omap = rng.uniform(0, 3, (5, 6, 4))
        dmap = rng.normal(scale=0.8, size=(5, 6, 8))
        out = refine_offset_map(omap, dmap, sign)
        ol, dl = omap.tolist(), dmap.tolist()
        for j in range(5):
            for i in range(6):
                np.testing.assert_allclose(out[j, i], refine_cell(ol, dl, j, i, sign), atol=1e-9)

    def test_signs_differ_only_on_left_top(self):
        rng = np.random.default_rng(2)
        omap = rng.uniform(0, 3, (4, 4, 4))
        dmap = rng.normal(size=(4, 4, 8))
        at = AnchorPoint(np.array([1, 2]), np.array([2, 1]))
        a = refine_offsets(omap, dmap, at, "paper")
        b = refine_offsets(omap, dmap, at, "derived")
        np.testing.assert_array_equal(a[:, 2:], b[:, 2:])
        expected_gap = 2 * np.stack([dmap[[1, 2], [2, 1], 0], dmap[[1, 2], [2, 1], 3]], axis=-1)
        np.testing.assert_allclose(a[:, :2] - b[:, :2], expected_gap)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            refine_offset_map(np.zeros((3, 3, 4)), np.zeros((3, 4, 8)))

    def test_bad_sign(self):
        with pytest.raises(ValueError):
            refine_offset_map(np.zeros((3, 3, 4)), np.zeros((3, 3, 8)), "flipped")


def test_nan_propagates():
    assert np.isnan(iou([np.nan, 0, 1, 1], [0, 0, 1, 1]))
    assert np.isnan(giou([np.nan, 0, 1, 1], [0, 0, 1, 1]))
