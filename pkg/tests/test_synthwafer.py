"""Synthetic wafer rendering, ground truth, and dataset generation."""

import numpy as np
import pytest

from waferinspect import grid, synthwafer as sw
from waferinspect.errors import (BadMix, DefectOutOfGrid, InvalidLayout,
                                 IoFailure)
from waferinspect.image import GrayImage, read_pgm, write_pgm
from waferinspect.labels import ChipPosition, Label

from conftest import make_tiny_layout


def _px(coord: float) -> int:
    """Image index of a pixel-center coordinate."""
    return int(np.floor(coord + 0.5))


class TestWaferLayout:
    def test_image_size_and_margin(self, tiny_layout):
        assert tiny_layout.margin_px == 12
        assert tiny_layout.image_size() == (96, 96)
        assert tiny_layout.origin_xy() == (48.0, 48.0)

    def test_chip_indices_raster_order(self, tiny_layout):
        idx = tiny_layout.chip_indices()
        assert idx[0] == (-1, -1) and idx[-1] == (1, 1)
        assert len(idx) == 9
        assert idx == sorted(idx, key=lambda c: (c[1], c[0]))

    def test_street_indices_cover_chip_adjacency(self, tiny_layout):
        keys = tiny_layout.street_indices()
        brute = set()
        for chip in tiny_layout.chip_indices():
            brute.update(grid.streets_of_chip(chip))
        assert set(keys) == brute
        assert len(keys) == 24
        assert keys == sorted(keys, key=lambda k: (k[1], k[0]))
        assert all(grid.is_street_key(k) for k in keys)

    def test_cell_bounds(self, tiny_layout):
        assert tiny_layout.cell_bounds((0, 0)) == (36, 36, 60, 60)
        assert tiny_layout.cell_bounds((-1, -1)) == (12, 12, 36, 36)
        with pytest.raises(InvalidLayout):
            tiny_layout.cell_bounds((2, 0))

    def test_street_geometry(self, tiny_layout):
        axis, line, span = tiny_layout.street_geometry((0.5, 0.0))
        assert (axis, line, span) == ("v", 60.0, (36.0, 60.0))
        axis, line, span = tiny_layout.street_geometry((0.0, -0.5))
        assert (axis, line, span) == ("h", 36.0, (36.0, 60.0))
        with pytest.raises(DefectOutOfGrid):
            tiny_layout.street_geometry((10.5, 0.0))

    def test_cut_width_default_and_override(self):
        assert make_tiny_layout().cut_width() == 1
        assert make_tiny_layout(street_width_px=9).cut_width() == 2
        assert make_tiny_layout(cut_width_px=3).cut_width() == 3

    def test_dict_round_trip(self, tiny_layout):
        assert sw.WaferLayout.from_dict(tiny_layout.to_dict()) == tiny_layout

    @pytest.mark.parametrize("kwargs", [
        {"chips_x": 0},
        {"street_width_px": 0},
        {"street_width_px": 24},
        {"wafer_radius_px": 20.0},
        {"street_intensity": 180},
        {"chip_intensity": 300},
        {"max_offset_px": 3},
        {"noise_sigma": -1.0},
    ])
    def test_rejects_bad_layout(self, kwargs):
        with pytest.raises(InvalidLayout):
            make_tiny_layout(**kwargs)


class TestChipPositionTruth:
    def test_tiny_layout_corners_outside(self, tiny_layout):
        positions = {c: sw.chip_position_truth(c, tiny_layout)
                     for c in tiny_layout.chip_indices()}
        outside = {c for c, p in positions.items() if p == ChipPosition.OUTSIDE}
        assert outside == {(-1, -1), (1, -1), (-1, 1), (1, 1)}

    def test_corner_on_circle_is_outside(self):
        # chip (1,1) has its far corner at squared distance exactly 400
        layout = make_tiny_layout(chip_pitch_px=8, street_width_px=2,
                                  chips_x=4, chips_y=3, wafer_radius_px=20.0)
        assert sw.chip_position_truth((1, 1), layout) == ChipPosition.OUTSIDE
        layout_in = make_tiny_layout(chip_pitch_px=8, street_width_px=2,
                                     chips_x=4, chips_y=3,
                                     wafer_radius_px=20.000001)
        assert sw.chip_position_truth((1, 1), layout_in) == ChipPosition.INSIDE

    def test_street_position_follows_adjacent_chips(self, tiny_layout):
        assert sw.street_position((0.5, 1.0), tiny_layout) == ChipPosition.INSIDE
        # between an outside corner chip and the grid edge
        assert sw.street_position((1.5, 1.0), tiny_layout) == ChipPosition.OUTSIDE


class TestDefectSpec:
    def test_rejects_bad_magnitude(self):
        with pytest.raises(ValueError):
            sw.DefectSpec(sw.DefectKind.HOLE, (0.5, 0.0), 0.0, 1)
        with pytest.raises(ValueError):
            sw.DefectSpec(sw.DefectKind.HOLE, (0.5, 0.0), 1.1, 1)

    def test_rejects_non_street_key(self):
        with pytest.raises(ValueError):
            sw.DefectSpec(sw.DefectKind.HOLE, (1.0, 0.0), 0.5, 1)
        with pytest.raises(ValueError):
            sw.DefectSpec(sw.DefectKind.HOLE, (0.5, 0.5), 0.5, 1)


class TestLabelForDefect:
    def test_hole_is_anomaly(self):
        spec = sw.DefectSpec(sw.DefectKind.HOLE, (0.5, 0.0), 0.9, 1)
        assert sw.label_for_defect(spec) == Label.ANOMALY

    def test_broken_corner_is_faulty(self):
        spec = sw.DefectSpec(sw.DefectKind.BROKEN_CORNER, (0.5, 0.0), 0.2, 1)
        assert sw.label_for_defect(spec) == Label.FAULTY

    def test_cut_severity_boundary(self):
        at = sw.DefectSpec(sw.DefectKind.MISDIRECTED_CUT, (0.5, 0.0), 0.5, 1)
        past = sw.DefectSpec(sw.DefectKind.MISDIRECTED_CUT, (0.5, 0.0), 0.50001, 1)
        assert sw.label_for_defect(at) == Label.ANOMALY
        assert sw.label_for_defect(past) == Label.FAULTY

    def test_default_palette_realizes_its_labels(self):
        for label, (kind, (lo, hi)) in sw.DEFAULT_PALETTE.items():
            for m in (lo + 1e-9, hi):
                spec = sw.DefectSpec(kind, (0.5, 0.0), m, 1)
                assert sw.label_for_defect(spec) == label


class TestGenerateWafer:
    def test_bit_identical_determinism(self, tiny_layout):
        layout = make_tiny_layout(noise_sigma=3.0, max_offset_px=2)
        spec = sw.DefectSpec(sw.DefectKind.HOLE, (0.5, 0.0), 0.8, 42)
        img1, truth1 = sw.generate_wafer(layout, [spec], seed=11)
        img2, truth2 = sw.generate_wafer(layout, [spec], seed=11)
        np.testing.assert_array_equal(img1.pixels, img2.pixels)
        assert truth1.pattern_offset == truth2.pattern_offset
        assert truth1.street_labels == truth2.street_labels

    def test_clean_wafer_gray_levels(self, clean_wafer):
        img, _ = clean_wafer
        assert set(np.unique(img.pixels)) == {30, 90, 180, 220}

    def test_known_pixel_probes(self, clean_wafer, tiny_layout):
        img, _ = clean_wafer
        px = img.pixels
        assert px[0, 0] == 220  # off-disc background
        for chip, pos in [(c, sw.chip_position_truth(c, tiny_layout))
                          for c in tiny_layout.chip_indices()]:
            if pos != ChipPosition.INSIDE:
                continue
            cx, cy = sw.chip_center_px(tiny_layout, chip)
            assert px[_px(cy), _px(cx)] == 180, chip
        assert px[48, 59] == 30  # cut strip on the (0.5, 0) street line
        assert px[48, 60] == 90  # street floor right next to it

    def test_noise_changes_with_seed(self):
        layout = make_tiny_layout(noise_sigma=3.0)
        img1, _ = sw.generate_wafer(layout, [], seed=0)
        img2, _ = sw.generate_wafer(layout, [], seed=1)
        assert (img1.pixels != img2.pixels).any()

    def test_pattern_offset_moves_rendering(self):
        layout = make_tiny_layout(max_offset_px=2)
        offsets = set()
        for seed in range(6):
            img, truth = sw.generate_wafer(layout, [], seed=seed)
            ox, oy = truth.pattern_offset
            assert -2 <= ox <= 2 and -2 <= oy <= 2
            offsets.add((ox, oy))
            for chip in truth.chip_labels:
                cx, cy = sw.chip_center_px(layout, chip, truth.pattern_offset)
                assert img.pixels[_px(cy), _px(cx)] == 180
        assert len(offsets) > 1

    def test_truth_covers_grid(self, clean_wafer, tiny_layout):
        _, truth = clean_wafer
        assert set(truth.chip_positions) == set(tiny_layout.chip_indices())
        assert set(truth.street_labels) == set(tiny_layout.street_indices())
        inside = {c for c, p in truth.chip_positions.items()
                  if p == ChipPosition.INSIDE}
        assert set(truth.chip_labels) == inside
        assert all(lab == Label.FLAWLESS for lab in truth.street_labels.values())
        assert all(lab == Label.FLAWLESS for lab in truth.chip_labels.values())

    def test_hole_labels_both_adjacent_chips(self, tiny_layout, clean_wafer):
        spec = sw.DefectSpec(sw.DefectKind.HOLE, (0.5, 0.0), 0.8, 7)
        img, truth = sw.generate_wafer(tiny_layout, [spec], seed=3)
        assert truth.street_labels[(0.5, 0.0)] == Label.ANOMALY
        assert truth.chip_labels[(0, 0)] == Label.ANOMALY
        assert truth.chip_labels[(1, 0)] == Label.ANOMALY
        assert truth.chip_labels[(-1, 0)] == Label.FLAWLESS
        clean_img, _ = clean_wafer
        changed = img.pixels != clean_img.pixels
        assert changed.any()
        assert set(np.unique(img.pixels[changed])) == {30}

    def test_worst_defect_wins_on_shared_street(self, tiny_layout):
        specs = [
            sw.DefectSpec(sw.DefectKind.HOLE, (0.5, 0.0), 0.6, 1),
            sw.DefectSpec(sw.DefectKind.MISDIRECTED_CUT, (0.5, 0.0), 0.9, 2),
        ]
        _, truth = sw.generate_wafer(tiny_layout, specs, seed=3)
        assert truth.street_labels[(0.5, 0.0)] == Label.FAULTY
        assert truth.chip_labels[(0, 0)] == Label.FAULTY

    def test_misdirected_cut_repaints_its_street(self, tiny_layout, clean_wafer):
        spec = sw.DefectSpec(sw.DefectKind.MISDIRECTED_CUT, (0.5, 0.0), 0.9, 5)
        img, truth = sw.generate_wafer(tiny_layout, [spec], seed=3)
        assert truth.street_labels[(0.5, 0.0)] == Label.FAULTY
        clean_img, _ = clean_wafer
        changed = img.pixels != clean_img.pixels
        assert changed.any()
        # erased strip pixels fall back to street gray, the bent cut paints 30
        assert set(np.unique(img.pixels[changed])) <= {30, 90}
        assert (img.pixels[changed] == 30).any()
        assert (img.pixels[changed] == 90).any()

    def test_rejects_defect_outside_grid(self, tiny_layout):
        spec = sw.DefectSpec(sw.DefectKind.HOLE, (10.5, 0.0), 0.5, 1)
        with pytest.raises(DefectOutOfGrid):
            sw.generate_wafer(tiny_layout, [spec], seed=0)


class TestPgmIo:
    def test_round_trip(self, tmp_path, clean_wafer):
        img, _ = clean_wafer
        path = tmp_path / "w.pgm"
        write_pgm(img, path)
        assert read_pgm(path) == img

    def test_reader_tolerates_comments(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n\x00\x01\x02\x03")
        img = read_pgm(path)
        np.testing.assert_array_equal(img.pixels, [[0, 1], [2, 3]])

    def test_truncated_raster(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
        with pytest.raises(IoFailure):
            read_pgm(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "p6.pgm"
        path.write_bytes(b"P6\n2 2\n255\n" + b"\x00" * 12)
        with pytest.raises(IoFailure):
            read_pgm(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            read_pgm(tmp_path / "absent.pgm")

    def test_gray_image_validation(self):
        with pytest.raises(ValueError):
            GrayImage(np.zeros(4))
        with pytest.raises(ValueError):
            GrayImage(np.full((2, 2), 300))


class TestGenerateDataset:
    def test_manifest_row_counts_and_round_trip(self, tmp_path, tiny_layout):
        rows = sw.generate_dataset(tiny_layout, {Label.FLAWLESS: 0.5,
                                                 Label.ANOMALY: 0.3,
                                                 Label.FAULTY: 0.2},
                                   n_wafers=3, seed=5, out_dir=tmp_path)
        assert len(rows) == 3 * (9 + 24)
        assert sw.read_manifest(tmp_path / "manifest.csv") == rows
        for w in range(3):
            assert (tmp_path / f"wafer_{w:04d}.pgm").exists()
        assert (tmp_path / "dataset.json").exists()

    def test_outside_streets_stay_flawless(self, tmp_path, tiny_layout):
        rows = sw.generate_dataset(tiny_layout, {Label.ANOMALY: 0.5,
                                                 Label.FAULTY: 0.5},
                                   n_wafers=4, seed=6, out_dir=tmp_path)
        streets = [r for r in rows if r.kind == "street"]
        outside = [r for r in streets if r.position == ChipPosition.OUTSIDE]
        assert outside and all(r.label == Label.FLAWLESS for r in outside)
        inside = [r for r in streets if r.position == ChipPosition.INSIDE]
        assert any(r.label != Label.FLAWLESS for r in inside)

    def test_class_mix_frequencies(self, tmp_path, tiny_layout):
        mix = {Label.FLAWLESS: 0.5, Label.ANOMALY: 0.3, Label.FAULTY: 0.2}
        rows = sw.generate_dataset(tiny_layout, mix, n_wafers=200, seed=7,
                                   out_dir=tmp_path)
        inside = [r for r in rows
                  if r.kind == "street" and r.position == ChipPosition.INSIDE]
        n = len(inside)
        assert n == 200 * 16
        for label, p in mix.items():
            got = sum(1 for r in inside if r.label == label) / n
            assert abs(got - p) < 0.05, label

    def test_determinism_across_directories(self, tmp_path, tiny_layout):
        mix = {Label.FLAWLESS: 0.6, Label.FAULTY: 0.4}
        rows_a = sw.generate_dataset(tiny_layout, mix, 2, 9, tmp_path / "a")
        rows_b = sw.generate_dataset(tiny_layout, mix, 2, 9, tmp_path / "b")
        assert rows_a == rows_b
        for name in ("wafer_0000.pgm", "wafer_0001.pgm", "manifest.csv",
                     "dataset.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_bad_mix(self, tmp_path, tiny_layout):
        with pytest.raises(BadMix):
            sw.generate_dataset(tiny_layout, {Label.FLAWLESS: 0.9}, 1, 0,
                                tmp_path)
        with pytest.raises(BadMix):
            sw.generate_dataset(tiny_layout, {Label.FLAWLESS: 1.5,
                                              Label.ANOMALY: -0.5}, 1, 0,
                                tmp_path)
        with pytest.raises(BadMix):
            sw.generate_dataset(tiny_layout, {Label.FLAWLESS: 1.0}, 0, 0,
                                tmp_path)

    def test_palette_without_requested_class(self, tmp_path, tiny_layout):
        with pytest.raises(BadMix):
            sw.generate_dataset(tiny_layout, {Label.FLAWLESS: 0.5,
                                              Label.ANOMALY: 0.5},
                                1, 0, tmp_path, palette={})

    def test_palette_magnitude_mismatch(self, tmp_path, tiny_layout):
        bad = {Label.FAULTY: (sw.DefectKind.MISDIRECTED_CUT, (0.2, 0.3))}
        with pytest.raises(BadMix):
            sw.generate_dataset(tiny_layout, {Label.FAULTY: 1.0}, 1, 0,
                                tmp_path, palette=bad)

    def test_manifest_rejects_bad_header(self, tmp_path):
        path = tmp_path / "manifest.csv"
        path.write_text("path,kind,x,y\nfoo,chip,0,0\n")
        with pytest.raises(IoFailure):
            sw.read_manifest(path)
