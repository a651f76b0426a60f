"""Street-classification benchmark: stacked pipeline vs flat methods.

Builds a seeded synthetic benchmark where the wafer pattern carries a
random offset, so a method that looks at nominal street positions sees
jittered, downscaled crops while the stacked approach re-extracts
full-resolution patches at the localized street centers. Six methods
run on identical splits: three classical baselines and an MLP on the
flattened unlocalized crops, a CNN on the unlocalized crops, and the
localized CNN (the street stage of the stacked pipeline).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import baselines, evaluation, nn
from .augment import AugmentationLevel, augment_dataset
from .errors import EmptyInput, NoContour, TooFew
from .image import GrayImage
from .imgproc import extract_patch, resize_box_mean
from .labels import ChipPosition, Label
from .localization import Template, TemplateLevel, locate_streets, segment_chips, wafer_street_center
from .seeding import derive_seed
from .synthwafer import (DEFAULT_PALETTE, DefectSpec, WaferLayout, generate_wafer,
                         label_for_defect, street_center_px, street_position)

METHODS = ("RFC", "SVC-linear", "SVC-RBF", "MLP", "CNN", "SH-CNN")


def default_benchmark_layout() -> WaferLayout:
    """Layout tuned so localization matters: jittered pattern, defects
    small against the street width."""
    return WaferLayout(wafer_radius_px=230.0, chip_pitch_px=96,
                       street_width_px=12, chips_x=4, chips_y=4,
                       max_offset_px=5, noise_sigma=4.0)


@dataclass
class StreetBenchmark:
    """Paired localized/unlocalized patches for the same streets.

    localized[i] and unlocalized[i] show the same street of the same
    wafer; labels[i] is its ground-truth class. Classes are exactly
    balanced by construction.
    """

    localized: list
    unlocalized: list
    labels: np.ndarray
    patch_size: int
    seed: int

    def __len__(self):
        return len(self.labels)


def _balanced_subsample(labels: np.ndarray, seed: int) -> np.ndarray:
    """Per-class subsample (without replacement) down to the rarest count."""
    counts = np.bincount(labels)
    m = int(counts[counts > 0].min())
    keep = []
    for cls in np.flatnonzero(counts):
        pool = np.flatnonzero(labels == cls)
        rng = np.random.default_rng((seed, int(cls)))
        keep.append(rng.choice(pool, m, replace=False))
    return np.sort(np.concatenate(keep))


_DEFECT_KINDS = (Label.ANOMALY, Label.FAULTY)


def _benchmark_wafer(layout: WaferLayout, palette: dict, inside_streets: list,
                     seed: int, w: int):
    """Wafer w of the benchmark set: uniform thirds over inside streets."""
    rng = np.random.default_rng((seed, w, 0))
    drawn = rng.integers(0, 3, size=len(inside_streets))
    defects = []
    for idx, (key, cls) in enumerate(zip(inside_streets, drawn)):
        if cls == 0:
            continue
        kind, (m_lo, m_hi) = palette[_DEFECT_KINDS[cls - 1]]
        defects.append(DefectSpec(kind, key, float(rng.uniform(m_lo, m_hi)),
                                  derive_seed(seed, w, 1, idx)))
    return generate_wafer(layout, defects, derive_seed(seed, w, 2))


def benchmark_truth_verdict(layout: WaferLayout, seed: int, wafer_index: int = 0):
    """Ground-truth WaferVerdict of one benchmark wafer, for reporting."""
    from .pipeline import WaferVerdict

    streets = layout.street_indices()
    inside_streets = [k for k in streets
                      if street_position(k, layout) == ChipPosition.INSIDE]
    if not inside_streets:
        raise EmptyInput("layout has no inside streets")
    _, truth = _benchmark_wafer(layout, DEFAULT_PALETTE, inside_streets,
                                seed, wafer_index)
    return WaferVerdict(street_labels=dict(truth.street_labels),
                        chip_labels=dict(truth.chip_labels),
                        chip_positions=dict(truth.chip_positions)).check()


def build_street_benchmark(layout: WaferLayout, n_wafers: int, patch_size: int,
                           downscale: int, seed: int, min_patches: int = 600,
                           palette: dict | None = None) -> StreetBenchmark:
    """Render wafers and collect one patch pair per inside street.

    The localized patch is cut from the wafer at the street center found
    by contour localization; the unlocalized patch is a larger crop at
    the nominal (offset-blind) center, box-downscaled to the same size.
    Streets whose adjacent chips all fail localization are dropped from
    both variants. Raises TooFew when balancing leaves fewer than
    min_patches samples.
    """
    if n_wafers < 1:
        raise EmptyInput("need at least one wafer")
    palette = DEFAULT_PALETTE if palette is None else palette
    tmpl = Template(layout=layout, patch_size=patch_size, level=TemplateLevel.STREET)
    streets = layout.street_indices()
    inside_streets = [k for k in streets
                      if street_position(k, layout) == ChipPosition.INSIDE]
    if not inside_streets:
        raise EmptyInput("layout has no inside streets")

    localized, unlocalized, labels = [], [], []
    for w in range(n_wafers):
        wafer, truth = _benchmark_wafer(layout, palette, inside_streets, seed, w)

        cells = dict(segment_chips(wafer, layout))
        inside_chips = sorted(c for c, p in truth.chip_positions.items()
                              if p is ChipPosition.INSIDE)
        centers: dict = {}
        for chip in inside_chips:
            try:
                rois = locate_streets(cells[chip], tmpl)
            except NoContour:
                continue
            for roi in rois:
                key = (chip[0] + roi.grid_index[0], chip[1] + roi.grid_index[1])
                centers.setdefault(key, wafer_street_center(layout, chip, roi))
        for key in inside_streets:
            if key not in centers:
                continue
            cx, cy = centers[key]
            localized.append(extract_patch(wafer, cx, cy, patch_size))
            nx, ny = street_center_px(layout, key)
            coarse = extract_patch(wafer, nx, ny, patch_size * downscale)
            unlocalized.append(resize_box_mean(coarse, downscale))
            labels.append(int(truth.street_labels[key]))

    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(labels)) < 3:
        raise TooFew("benchmark draw missed a class; use more wafers")
    keep = _balanced_subsample(labels, derive_seed(seed, 3))
    if len(keep) < min_patches:
        raise TooFew(f"balanced benchmark has {len(keep)} patches, "
                     f"need {min_patches}; increase n_wafers")
    return StreetBenchmark(localized=[localized[i] for i in keep],
                           unlocalized=[unlocalized[i] for i in keep],
                           labels=labels[keep], patch_size=patch_size, seed=seed)


@dataclass(frozen=True)
class MethodParams:
    """Hyperparameters shared by the six compared methods."""

    epochs: int = 20
    learning_rate: float = 2e-3
    batch_size: int = 32
    block_widths: tuple[int, int, int] = (8, 16, 32)
    dense1_units: int = 64
    conv_dropout: float = 0.0
    dense_dropout: float = 0.0
    mlp_hidden: int = 64
    mlp_epochs: int = 30
    n_trees: int = 60
    svc_c: float = 1.0

    def __post_init__(self):
        if self.epochs < 1 or self.mlp_epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.n_trees < 1 or self.mlp_hidden < 1:
            raise ValueError("n_trees and mlp_hidden must be >= 1")


def _to_tensor(imgs: list) -> np.ndarray:
    return np.stack([p.pixels for p in imgs])[:, None, :, :] / 255.0


def _tensors(imgs: list, labels: np.ndarray, idx: np.ndarray) -> nn.LabeledTensors:
    return nn.LabeledTensors(_to_tensor([imgs[i] for i in idx]), labels[idx])


def _features(pairs: list) -> baselines.FeatureMatrix:
    return baselines.FeatureMatrix.from_patches(pairs)


def _train_cnn(train_pairs: list, val: nn.LabeledTensors, params: MethodParams,
               patch_size: int, seed: int) -> nn.Network:
    cfg = nn.NetworkConfig(block_widths=params.block_widths,
                           conv_dropout=params.conv_dropout,
                           dense1_units=params.dense1_units,
                           dense_dropout=params.dense_dropout,
                           n_classes=3, input_hw=(patch_size, patch_size))
    net = nn.Network(cfg, seed=derive_seed(seed, 0))
    data = nn.LabeledTensors(_to_tensor([p for p, _ in train_pairs]),
                             np.array([y for _, y in train_pairs], dtype=np.int64))
    nn.train(net, data, val,
             nn.TrainConfig(learning_rate=params.learning_rate,
                            batch_size=params.batch_size, epochs=params.epochs,
                            patience=0, seed=derive_seed(seed, 1)))
    return net


def run_once(bench: StreetBenchmark, level: AugmentationLevel,
             params: MethodParams, run_seed: int) -> dict:
    """Accuracy of every method for one split/weight resample."""
    split = evaluation.split_dataset(len(bench), run_seed)
    y = bench.labels
    bal = evaluation.balance_classes(y[split.train], derive_seed(run_seed, 1))
    train_idx = split.train[bal]

    u_pairs = [(bench.unlocalized[i], int(y[i])) for i in train_idx]
    u_pairs = augment_dataset(u_pairs, level, seed=derive_seed(run_seed, 2))
    l_pairs = [(bench.localized[i], int(y[i])) for i in train_idx]
    l_pairs = augment_dataset(l_pairs, level, seed=derive_seed(run_seed, 3))

    fm_train = _features(u_pairs)
    fm_val = _features([(bench.unlocalized[i], int(y[i])) for i in split.validation])
    u_test = _features([(bench.unlocalized[i], int(y[i])) for i in split.test])
    y_test = y[split.test]

    acc: dict = {}
    rfc = baselines.train_rfc(fm_train, n_trees=params.n_trees,
                              seed=derive_seed(run_seed, 4))
    acc["RFC"] = evaluation.accuracy(rfc.predict(u_test.x), y_test)
    lin = baselines.train_svc_linear(fm_train, c=params.svc_c,
                                     seed=derive_seed(run_seed, 5))
    acc["SVC-linear"] = evaluation.accuracy(lin.predict(u_test.x), y_test)
    rbf = baselines.train_svc_rbf(fm_train, c=params.svc_c,
                                  seed=derive_seed(run_seed, 6))
    acc["SVC-RBF"] = evaluation.accuracy(rbf.predict(u_test.x), y_test)
    mlp = baselines.train_mlp(fm_train, hidden_units=params.mlp_hidden,
                              cfg=nn.TrainConfig(epochs=params.mlp_epochs,
                                                 patience=0,
                                                 seed=derive_seed(run_seed, 7)),
                              val=fm_val)
    acc["MLP"] = evaluation.accuracy(mlp.predict(u_test.x), y_test)

    cnn = _train_cnn(u_pairs, _tensors(bench.unlocalized, y, split.validation),
                     params, bench.patch_size, derive_seed(run_seed, 8))
    pred, _ = nn.predict_batched(cnn, _to_tensor([bench.unlocalized[i]
                                                  for i in split.test]))
    acc["CNN"] = evaluation.accuracy(pred, y_test)

    shcnn = _train_cnn(l_pairs, _tensors(bench.localized, y, split.validation),
                       params, bench.patch_size, derive_seed(run_seed, 9))
    pred, _ = nn.predict_batched(shcnn, _to_tensor([bench.localized[i]
                                                    for i in split.test]))
    acc["SH-CNN"] = evaluation.accuracy(pred, y_test)
    return acc


def run_benchmark(bench: StreetBenchmark, aug_levels, params: MethodParams,
                  n_runs: int = 5, seed: int = 0) -> list:
    """The full comparison: methods x augmentation levels over n_runs.

    Each run resamples the split and the weights with seed+run_index.
    Returns ResultRows in method-major order matching METHODS.
    """
    if n_runs < 2:
        raise TooFew("need at least two runs for a std estimate")
    levels = [lv if isinstance(lv, AugmentationLevel) else AugmentationLevel(int(lv))
              for lv in aug_levels]
    if not levels:
        raise EmptyInput("need at least one augmentation level")
    per_level = []
    for level in levels:
        runs = [run_once(bench, level, params, seed + r) for r in range(n_runs)]
        per_level.append(runs)
    rows = []
    for method in METHODS:
        for level, runs in zip(levels, per_level):
            stats = evaluation.run_stats([r[method] for r in runs])
            rows.append(evaluation.ResultRow(method=method, aug_level=level.l,
                                             mean_acc=stats.mean, std_acc=stats.std))
    return rows
