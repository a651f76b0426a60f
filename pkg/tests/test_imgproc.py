"""Image-processing primitives against literal reference implementations."""

import numpy as np
import pytest

from conftest import random_gray
from oracles import (equalize_reference, erode_reference, otsu_reference,
                     outer_boundary_reference, shoelace)
from waferinspect.errors import DegenerateContour, EmptyInput
from waferinspect.image import BinaryImage, GrayImage
from waferinspect.imgproc import (Contour, contour_area, equalize_histogram,
                                  erode, extract_patch, follow_borders,
                                  largest_contour, otsu_threshold,
                                  resize_box_mean, side_centers,
                                  threshold_binary)


def binary(rows) -> BinaryImage:
    return BinaryImage(np.array(rows, dtype=np.uint8))


class TestEqualize:
    def test_four_distinct_values_stretch_to_full_range(self):
        img = GrayImage(np.array([[0, 1, 2, 3]], dtype=np.uint8))
        out = equalize_histogram(img)
        assert out.pixels.tolist() == [[0, 85, 170, 255]]

    def test_constant_image_unchanged(self):
        img = GrayImage(np.full((5, 5), 137, dtype=np.uint8))
        out = equalize_histogram(img)
        assert np.array_equal(out.pixels, img.pixels)

    def test_matches_cdf_formula_on_random_images(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            img = random_gray(rng, int(rng.integers(1, 17)), int(rng.integers(1, 17)))
            out = equalize_histogram(img)
            assert np.array_equal(out.pixels, equalize_reference(img.pixels))

    def test_minimum_maps_to_zero_and_order_is_kept(self):
        rng = np.random.default_rng(12)
        img = random_gray(rng, 12, 12)
        out = equalize_histogram(img)
        assert out.pixels.min() == 0
        # monotone lookup: sorting by input value sorts the output value
        order = np.argsort(img.pixels.ravel(), kind="stable")
        mapped = out.pixels.ravel()[order]
        assert (np.diff(mapped.astype(np.int64)) >= 0).all()

    def test_does_not_mutate_input(self):
        img = GrayImage(np.array([[0, 255]], dtype=np.uint8))
        before = img.pixels.copy()
        equalize_histogram(img)
        assert np.array_equal(img.pixels, before)


class TestThreshold:
    def test_bit_is_one_at_and_above_threshold(self):
        img = GrayImage(np.array([[10, 99, 100, 101, 200]], dtype=np.uint8))
        out = threshold_binary(img, 100)
        assert out.bits.tolist() == [[0, 0, 1, 1, 1]]

    def test_explicit_threshold_out_of_range_rejected(self):
        img = GrayImage(np.zeros((2, 2), dtype=np.uint8))
        with pytest.raises(ValueError):
            threshold_binary(img, 256)

    def test_otsu_matches_exhaustive_scan(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            img = random_gray(rng, int(rng.integers(2, 17)), int(rng.integers(2, 17)))
            assert otsu_threshold(img) == otsu_reference(img.pixels)

    def test_otsu_separates_a_bimodal_image(self):
        rng = np.random.default_rng(14)
        lo = rng.integers(20, 60, size=(8, 8))
        hi = rng.integers(180, 220, size=(8, 8))
        img = GrayImage(np.concatenate([lo, hi], axis=1).astype(np.uint8))
        t = otsu_threshold(img)
        assert 60 <= t <= 180
        out = threshold_binary(img)
        assert np.array_equal(out.bits, (img.pixels >= t).astype(np.uint8))


class TestErode:
    def test_five_square_erodes_to_central_three_square(self):
        img = binary(np.ones((5, 5), dtype=np.uint8))
        out = erode(img, 1)
        expected = np.zeros((5, 5), dtype=np.uint8)
        expected[1:4, 1:4] = 1
        assert np.array_equal(out.bits, expected)

    def test_isolated_pixel_vanishes(self):
        img = binary([[0, 0, 0], [0, 1, 0], [0, 0, 0]])
        assert erode(img, 1).bits.sum() == 0

    def test_edge_foreground_erodes_away(self):
        # ones everywhere: only the interior survives, the border is
        # adjacent to off-image background
        img = binary(np.ones((4, 6), dtype=np.uint8))
        out = erode(img, 1)
        assert out.bits[0].sum() == 0 and out.bits[-1].sum() == 0
        assert out.bits[1:3, 1:5].all()

    def test_matches_set_definition_on_random_images(self):
        rng = np.random.default_rng(15)
        for _ in range(40):
            h, w = int(rng.integers(1, 17)), int(rng.integers(1, 17))
            bits = (rng.random((h, w)) < rng.uniform(0.2, 0.8)).astype(np.uint8)
            r = int(rng.integers(1, 3))
            out = erode(BinaryImage(bits), r)
            assert np.array_equal(out.bits, erode_reference(bits, r))

    def test_result_is_subset_of_input(self):
        rng = np.random.default_rng(16)
        bits = (rng.random((10, 10)) < 0.7).astype(np.uint8)
        out = erode(BinaryImage(bits), 1)
        assert not (out.bits & ~bits).any()


class TestFollowBorders:
    def test_empty_image_yields_no_contours(self):
        assert follow_borders(binary(np.zeros((4, 4), dtype=np.uint8))) == []

    def test_single_pixel_contour(self):
        img = binary(np.zeros((5, 5), dtype=np.uint8))
        img.bits[2, 2] = 1
        (c,) = follow_borders(img)
        assert c.points.tolist() == [[2, 2]]

    def test_three_square_perimeter_clockwise(self):
        img = binary(np.zeros((5, 5), dtype=np.uint8))
        img.bits[1:4, 1:4] = 1
        (c,) = follow_borders(img)
        assert c.points.tolist() == [[1, 1], [2, 1], [3, 1], [3, 2],
                                     [3, 3], [2, 3], [1, 3], [1, 2]]

    def test_components_reported_in_raster_order(self):
        img = binary([[0, 0, 0, 1],
                      [1, 0, 0, 1],
                      [0, 0, 0, 0],
                      [1, 1, 0, 0]])
        starts = [tuple(c.points[0]) for c in follow_borders(img)]
        assert starts == [(3, 0), (0, 1), (0, 3)]

    def test_matches_exterior_boundary_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            h, w = int(rng.integers(1, 17)), int(rng.integers(1, 17))
            bits = (rng.random((h, w)) < rng.uniform(0.2, 0.8)).astype(np.uint8)
            contours = follow_borders(BinaryImage(bits))
            expected = outer_boundary_reference(bits)
            assert len(contours) == len(expected)
            for c, (first, boundary) in zip(contours, expected):
                assert tuple(c.points[0]) == first
                assert {(int(p[0]), int(p[1])) for p in c.points} == boundary

    def test_walk_is_one_eight_connected_loop(self):
        rng = np.random.default_rng(18)
        for _ in range(25):
            bits = (rng.random((12, 12)) < rng.uniform(0.3, 0.7)).astype(np.uint8)
            for c in follow_borders(BinaryImage(bits)):
                pts = [tuple(p) for p in c.points]
                for a, b in zip(pts, pts[1:]):
                    assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1
                if len(pts) > 1:
                    # the loop closes back onto its start
                    a, b = pts[-1], pts[0]
                    assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1
                    # one traversal: no border step is walked twice
                    steps = list(zip(pts, pts[1:]))
                    assert len(steps) == len(set(steps))

    def test_spur_pixels_appear_once_per_fold(self):
        # a 1x3 line is all spur: the walk goes out and folds back
        img = binary([[0, 0, 0, 0, 0],
                      [0, 1, 1, 1, 0],
                      [0, 0, 0, 0, 0]])
        (c,) = follow_borders(img)
        assert c.points.tolist() == [[1, 1], [2, 1], [3, 1], [2, 1]]


class TestContourSelection:
    def test_area_of_square_border(self):
        img = binary(np.zeros((6, 6), dtype=np.uint8))
        img.bits[1:4, 1:4] = 1
        (c,) = follow_borders(img)
        assert contour_area(c) == pytest.approx(4.0)
        assert contour_area(c) == pytest.approx(shoelace(c.points))

    def test_short_contours_have_zero_area(self):
        assert contour_area(Contour(np.array([[2, 2]]))) == 0.0
        assert contour_area(Contour(np.array([[0, 0], [1, 1]]))) == 0.0

    def test_largest_wins_by_area(self):
        img = binary(np.zeros((10, 10), dtype=np.uint8))
        img.bits[1:3, 1:3] = 1   # 2x2
        img.bits[4:9, 4:9] = 1   # 5x5
        got = largest_contour(follow_borders(img))
        assert tuple(got.points[0]) == (4, 4)

    def test_area_tie_goes_to_earlier_raster_start(self):
        img = binary(np.zeros((8, 8), dtype=np.uint8))
        img.bits[1:3, 5:7] = 1
        img.bits[5:7, 1:3] = 1
        got = largest_contour(follow_borders(img))
        assert tuple(got.points[0]) == (5, 1)

    def test_empty_list_raises(self):
        with pytest.raises(EmptyInput):
            largest_contour([])


class TestSideCenters:
    def test_axis_aligned_square(self):
        img = binary(np.ones((5, 5), dtype=np.uint8))
        (c,) = follow_borders(img)
        top, right, bottom, left = side_centers(c)
        assert top == (2.0, 0.0)
        assert right == (4.0, 2.0)
        assert bottom == (2.0, 4.0)
        assert left == (0.0, 2.0)

    def test_rectangle_midpoints(self):
        img = binary(np.zeros((8, 12), dtype=np.uint8))
        img.bits[2:6, 3:10] = 1
        (c,) = follow_borders(img)
        top, right, bottom, left = side_centers(c)
        assert top == (6.0, 2.0)
        assert right == (9.0, 3.5)
        assert bottom == (6.0, 5.0)
        assert left == (3.0, 3.5)

    def test_degenerate_line_raises(self):
        line = Contour(np.array([[1, 3], [2, 3], [3, 3]]))
        with pytest.raises(DegenerateContour):
            side_centers(line)


class TestPatchOps:
    def test_interior_patch_is_plain_crop(self):
        rng = np.random.default_rng(19)
        img = random_gray(rng, 10, 10)
        out = extract_patch(img, 5.0, 4.0, 4)
        assert np.array_equal(out.pixels, img.pixels[2:6, 3:7])

    def test_corner_patch_replicates_edges(self):
        img = GrayImage(np.array([[1, 2, 3], [4, 5, 6], [7, 8, 9]], dtype=np.uint8))
        out = extract_patch(img, 0.0, 0.0, 3)
        assert out.pixels.tolist() == [[1, 1, 2], [1, 1, 2], [4, 4, 5]]

    def test_patch_size_is_constant_everywhere(self):
        rng = np.random.default_rng(20)
        img = random_gray(rng, 9, 9)
        for cx, cy in ((0, 0), (8, 8), (-3, 4), (4, 20)):
            out = extract_patch(img, cx, cy, 6)
            assert out.pixels.shape == (6, 6)

    def test_box_mean_rounds_half_up(self):
        img = GrayImage(np.array([[0, 1], [2, 3]], dtype=np.uint8))
        assert resize_box_mean(img, 2).pixels.tolist() == [[2]]

    def test_box_mean_blocks(self):
        img = GrayImage(np.arange(16, dtype=np.uint8).reshape(4, 4))
        out = resize_box_mean(img, 2)
        # block means 2.5, 4.5, 10.5, 12.5 round half-up
        assert out.pixels.tolist() == [[3, 5], [11, 13]]

    def test_box_mean_factor_one_copies(self):
        img = GrayImage(np.array([[9]], dtype=np.uint8))
        out = resize_box_mean(img, 1)
        assert out.pixels == img.pixels and out.pixels is not img.pixels

    def test_box_mean_rejects_indivisible_size(self):
        img = GrayImage(np.zeros((5, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            resize_box_mean(img, 2)
