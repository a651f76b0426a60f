"""Stacked-stage orchestration: chip stage, street stage, chip mapping.

The chip stage classifies nominal chip cells inside/outside the wafer
disc. The street stage locates the four streets of each inside chip,
re-extracts full-resolution patches from the wafer at the located
centers, and classifies them flawless/anomaly/faulty. Chip defect labels
are then the maximum severity over adjacent streets. Training routes
localized patches through class balancing and augmentation; inference
feeds them straight to the classifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import evaluation, nn
from .augment import AugmentationLevel, augment_dataset
from .errors import (EmptyInput, IoFailure, LayoutMismatch, MissingAdjacency,
                     NoContour, StageFailure, UntrainedModel)
from .grid import (chips_of_street, format_coord, is_street_key, parse_coord,
                   streets_of_chip)
from .image import GrayImage
from .imgproc import extract_patch, resize_box_mean
from .labels import Label, ChipPosition, worst
from .localization import (Template, TemplateLevel, locate_streets,
                           segment_chips, wafer_street_center)
from .seeding import derive_seed


@dataclass
class StageConfig:
    """One stage of the stack: how to localize, augment, and classify.

    mode routes the data flow: TRAIN sends localized patches through
    balancing and augmentation into the optimizer, INFER sends them
    straight to the classifier and the verdict out.
    """

    template: Template
    augmentation: AugmentationLevel = field(
        default_factory=lambda: AugmentationLevel(0))
    classifier: object | None = None
    mode: nn.Mode = nn.Mode.INFER


def _require_model(cfg: StageConfig):
    if cfg.classifier is None:
        raise UntrainedModel("stage has no trained classifier attached")
    return cfg.classifier


def _cell_to_input(cell: GrayImage, layout, patch_size: int) -> GrayImage:
    factor = layout.chip_pitch_px // patch_size
    if factor < 1 or factor * patch_size != layout.chip_pitch_px:
        raise LayoutMismatch(
            f"chip pitch {layout.chip_pitch_px} is not an integer multiple "
            f"of patch size {patch_size}")
    return resize_box_mean(cell, factor)


def chip_input_patches(wafer: GrayImage, cfg: StageConfig):
    """(grid_index, model-input patch) for every nominal chip cell."""
    layout = cfg.template.layout
    return [(chip, _cell_to_input(cell, layout, cfg.template.patch_size))
            for chip, cell in segment_chips(wafer, layout)]


def _to_tensor(patches: list[GrayImage]) -> np.ndarray:
    return np.stack([p.pixels for p in patches])[:, None, :, :] / 255.0


def _fit_classifier(patches, labels, cfg: StageConfig,
                    train_cfg: nn.TrainConfig):
    """Balance, augment, and train the stage classifier in place.

    Validation for early stopping is the raw patch set. Callers that
    want a real held-out protocol split first and train the classifier
    through nn.train themselves.
    """
    model = _require_model(cfg)
    labels = np.asarray(labels, dtype=np.int64)
    keep = evaluation.balance_classes(labels, derive_seed(train_cfg.seed, 1))
    pairs = [(patches[i], int(labels[i])) for i in keep]
    pairs = augment_dataset(pairs, cfg.augmentation,
                            seed=derive_seed(train_cfg.seed, 2))
    x = _to_tensor([img for img, _ in pairs])
    y = np.array([lab for _, lab in pairs], dtype=np.int64)
    return nn.train(model, nn.LabeledTensors(x, y),
                    nn.LabeledTensors(_to_tensor(patches), labels), train_cfg)


def run_chip_stage(wafer: GrayImage, cfg: StageConfig, labels=None,
                   train_cfg: nn.TrainConfig | None = None):
    """Classify every nominal cell inside/outside the wafer disc.

    INFER requires a trained classifier. TRAIN additionally needs the
    wafer's position truth (grid index -> ChipPosition) and fits the
    stage classifier on this wafer before classifying it.
    """
    if cfg.template.level is not TemplateLevel.CHIP:
        raise LayoutMismatch("chip stage needs a chip-level template")
    items = chip_input_patches(wafer, cfg)
    if cfg.mode is nn.Mode.TRAIN:
        if labels is None:
            raise EmptyInput("TRAIN mode needs position labels")
        y = [int(labels[chip]) for chip, _ in items]
        _fit_classifier([p for _, p in items], y, cfg,
                        train_cfg or nn.TrainConfig())
    model = _require_model(cfg)
    pred, _ = nn.predict_batched(model, _to_tensor([p for _, p in items]))
    return {chip: ChipPosition(int(k)) for (chip, _), k in zip(items, pred)}


def fit_chip_stage(wafers_with_truth, cfg: StageConfig,
                   train_cfg: nn.TrainConfig):
    """Train the chip classifier on (wafer, GroundTruth) pairs."""
    patches, labels = [], []
    for wafer, truth in wafers_with_truth:
        for chip, patch in chip_input_patches(wafer, cfg):
            patches.append(patch)
            labels.append(int(truth.chip_positions[chip]))
    if not patches:
        raise EmptyInput("no wafers to fit the chip stage on")
    return _fit_classifier(patches, labels, cfg, train_cfg)


def fit_street_stage(wafers_with_truth, cfg: StageConfig,
                     train_cfg: nn.TrainConfig):
    """Train the street classifier on (wafer, GroundTruth) pairs.

    Streets are located per inside chip; chips whose contour cannot be
    found contribute nothing to training.
    """
    if cfg.template.level is not TemplateLevel.STREET:
        raise LayoutMismatch("street stage needs a street-level template")
    layout = cfg.template.layout
    patches, labels = [], []
    for wafer, truth in wafers_with_truth:
        cells = dict(segment_chips(wafer, layout))
        inside = sorted(c for c, p in truth.chip_positions.items()
                        if p is ChipPosition.INSIDE)
        for chip in inside:
            try:
                found = street_patches_of_chip(wafer, chip, cells[chip], cfg)
            except NoContour:
                continue
            for key, patch in found:
                patches.append(patch)
                labels.append(int(truth.street_labels[key]))
    if not patches:
        raise EmptyInput("no street patches to fit on")
    return _fit_classifier(patches, labels, cfg, train_cfg)


def street_patches_of_chip(wafer: GrayImage, chip, cell: GrayImage,
                           cfg: StageConfig):
    """Locate the chip's streets and cut patches from the full wafer.

    Returns (street key, patch) pairs. The patch is re-extracted from
    the wafer image at the located center so the crop follows the actual
    pattern offset instead of the nominal grid.
    """
    layout = cfg.template.layout
    out = []
    for roi in locate_streets(cell, cfg.template):
        cx, cy = wafer_street_center(layout, chip, roi)
        key = (chip[0] + roi.grid_index[0], chip[1] + roi.grid_index[1])
        out.append((key, extract_patch(wafer, cx, cy, cfg.template.patch_size)))
    return out


def _merge_street(acc: dict, key, label: Label):
    acc[key] = worst(acc[key], label) if key in acc else label


def run_street_stage(wafer: GrayImage, inside_chips, cfg: StageConfig,
                     labels=None, train_cfg: nn.TrainConfig | None = None):
    """Label the streets adjacent to the given inside chips.

    Streets shared by two inside chips are scored from both sides and
    keep the worse verdict. A chip whose contour cannot be found marks
    its four streets anomalous for manual review instead of failing the
    wafer. TRAIN mode needs street truth labels and fits the classifier
    on this wafer first.
    """
    if cfg.template.level is not TemplateLevel.STREET:
        raise LayoutMismatch("street stage needs a street-level template")
    model = _require_model(cfg)
    layout = cfg.template.layout
    cells = dict(segment_chips(wafer, layout))
    located, failed = [], []
    for chip in inside_chips:
        try:
            located.extend(street_patches_of_chip(wafer, chip, cells[chip], cfg))
        except NoContour:
            failed.append(chip)
    if cfg.mode is nn.Mode.TRAIN:
        if labels is None:
            raise EmptyInput("TRAIN mode needs street labels")
        y = [int(labels[key]) for key, _ in located]
        _fit_classifier([p for _, p in located], y, cfg,
                        train_cfg or nn.TrainConfig())
    out: dict = {}
    if located:
        pred, _ = nn.predict_batched(model, _to_tensor([p for _, p in located]))
        for (key, _), k in zip(located, pred):
            _merge_street(out, key, Label(int(k)))
    for chip in failed:
        for key in streets_of_chip(chip):
            _merge_street(out, key, Label.ANOMALY)
    return out


def map_streets_to_chips(street_labels: dict, chips=None) -> dict:
    """Chip label = maximum severity over its adjacent labeled streets.

    With chips omitted, every chip adjacent to a labeled street is
    mapped; an explicit chip lacking any labeled adjacent street raises
    MissingAdjacency.
    """
    if chips is None:
        chips = sorted({c for key in street_labels for c in chips_of_street(key)})
    out = {}
    for chip in chips:
        adjacent = [street_labels[k] for k in streets_of_chip(chip)
                    if k in street_labels]
        if not adjacent:
            raise MissingAdjacency(f"chip {chip} has no labeled adjacent street")
        label = Label.FLAWLESS
        for lab in adjacent:
            label = worst(label, lab)
        out[chip] = label
    return out


@dataclass
class WaferVerdict:
    """Street labels, chip labels derived from them, and chip positions."""

    street_labels: dict
    chip_labels: dict
    chip_positions: dict

    def check(self):
        """Assert the construction invariants; returns self."""
        inside = {c for c, p in self.chip_positions.items()
                  if p is ChipPosition.INSIDE}
        if not set(self.chip_labels) <= inside:
            raise MissingAdjacency("an outside chip carries a defect label")
        if self.chip_labels:
            remapped = map_streets_to_chips(self.street_labels,
                                            sorted(self.chip_labels))
            if remapped != self.chip_labels:
                raise MissingAdjacency("chip labels disagree with street map")
        return self


def run_shcnn(wafer: GrayImage, stage_cfgs: list[StageConfig]) -> WaferVerdict:
    """Run the stage stack in order and assemble the wafer verdict.

    The first config must be chip-level; every following config is a
    street-level pass (finer templates allowed), merged conservatively so
    the worse verdict per street wins. A single-stage list yields a
    verdict with positions only. Stage errors are re-raised with the
    stage index attached.
    """
    if not stage_cfgs:
        raise EmptyInput("need at least one stage config")
    try:
        positions = run_chip_stage(wafer, stage_cfgs[0])
    except Exception as exc:
        raise StageFailure(f"stage 0 (chip): {exc}") from exc
    inside = sorted(c for c, p in positions.items()
                    if p is ChipPosition.INSIDE)
    streets: dict = {}
    for i, cfg in enumerate(stage_cfgs[1:], start=1):
        try:
            stage_out = run_street_stage(wafer, inside, cfg)
        except Exception as exc:
            raise StageFailure(f"stage {i} (street): {exc}") from exc
        for key, lab in stage_out.items():
            _merge_street(streets, key, lab)
    chips = map_streets_to_chips(streets, inside) if streets else {}
    return WaferVerdict(street_labels=streets, chip_labels=chips,
                        chip_positions=positions).check()


VERDICT_HEADER = ("kind", "x", "y", "label")


def verdict_csv(verdict: WaferVerdict) -> str:
    """Verdict rows as CSV text: kind,x,y,label with labels 0/1/2.

    Chip rows carry integer coordinates, street rows exactly one
    half-integer coordinate. Rows are sorted for stable bytes.
    """
    lines = [",".join(VERDICT_HEADER)]
    for (x, y), lab in sorted(verdict.chip_labels.items(),
                              key=lambda kv: (kv[0][1], kv[0][0])):
        lines.append(f"chip,{format_coord(x)},{format_coord(y)},{int(lab)}")
    for (x, y), lab in sorted(verdict.street_labels.items(),
                              key=lambda kv: (kv[0][1], kv[0][0])):
        lines.append(f"street,{format_coord(x)},{format_coord(y)},{int(lab)}")
    return "\n".join(lines) + "\n"


def write_verdict(path, verdict: WaferVerdict) -> None:
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(verdict_csv(verdict))
    except OSError as exc:
        raise IoFailure(f"cannot write verdict to {path}: {exc}") from exc


def read_verdict(path) -> WaferVerdict:
    """Read a verdict CSV; chips present in the file count as inside."""
    try:
        with open(path, newline="") as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    except OSError as exc:
        raise IoFailure(f"cannot read verdict from {path}: {exc}") from exc
    if not lines or tuple(lines[0].split(",")) != VERDICT_HEADER:
        raise IoFailure(f"bad verdict header in {path}")
    streets, chips = {}, {}
    for ln in lines[1:]:
        kind, xs, ys, ls = ln.split(",")
        key = (parse_coord(xs), parse_coord(ys))
        label = Label(int(ls))
        if kind == "street":
            if not is_street_key(key):
                raise IoFailure(f"street row without half-integer address: {ln}")
            streets[key] = label
        elif kind == "chip":
            chips[(int(key[0]), int(key[1]))] = label
        else:
            raise IoFailure(f"unknown verdict row kind: {kind}")
    positions = {c: ChipPosition.INSIDE for c in chips}
    return WaferVerdict(street_labels=streets, chip_labels=chips,
                        chip_positions=positions)


def summarize_verdict(verdict: WaferVerdict) -> dict:
    """Per-class counts for the JSON summary."""
    def count(labels):
        return {lab.name.lower(): sum(1 for v in labels if v is lab)
                for lab in Label}
    return {
        "chips": count(verdict.chip_labels.values()),
        "streets": count(verdict.street_labels.values()),
        "positions": {
            "inside": sum(1 for p in verdict.chip_positions.values()
                          if p is ChipPosition.INSIDE),
            "outside": sum(1 for p in verdict.chip_positions.values()
                           if p is ChipPosition.OUTSIDE),
        },
    }
