"""Command line entry point: synth, train, eval, infer, report.

Exit codes: 0 success, 1 usage error, 2 data or model error. Diagnostics
go to standard error; machine-readable output goes to files only. Every
run is fully determined by the config file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluation, experiment, nn
from .augment import AugmentationLevel
from .config import ExperimentConfig, load_config
from .errors import UntrainedModel, WaferInspectError
from .image import read_pgm
from .labels import ChipPosition
from .localization import Template, TemplateLevel
from .pipeline import (StageConfig, fit_chip_stage, fit_street_stage,
                       read_verdict, run_shcnn, summarize_verdict,
                       write_verdict)
from .seeding import derive_seed
from .synthwafer import GroundTruth, generate_dataset, read_manifest
from .wafermap import WaferMap, write_svg


def _out_dir(cfg: ExperimentConfig, override) -> Path:
    out = Path(override) if override else Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_wafers(cfg: ExperimentConfig, out: Path):
    """Rebuild (wafer, truth) pairs from a synthesized dataset directory."""
    data_dir = out / "dataset"
    rows = read_manifest(data_dir / "manifest.csv")
    by_wafer: dict = {}
    for r in rows:
        by_wafer.setdefault(r.path, []).append(r)
    pairs = []
    for name in sorted(by_wafer):
        wafer = read_pgm(data_dir / name)
        streets, chips, positions = {}, {}, {}
        for r in by_wafer[name]:
            if r.kind == "street":
                streets[(r.x, r.y)] = r.label
            else:
                key = (int(r.x), int(r.y))
                positions[key] = r.position
                if r.position is ChipPosition.INSIDE:
                    chips[key] = r.label
        pairs.append((wafer, GroundTruth(street_labels=streets,
                                         chip_labels=chips,
                                         chip_positions=positions,
                                         pattern_offset=(0, 0))))
    return pairs


def _stage_configs(cfg: ExperimentConfig, models: Path | None = None):
    """INFER-mode chip and street stages, optionally with checkpoints."""
    chip_t = Template(layout=cfg.layout, patch_size=cfg.train.chip_patch_size,
                      level=TemplateLevel.CHIP)
    street_t = Template(layout=cfg.layout, patch_size=cfg.train.street_patch_size,
                        level=TemplateLevel.STREET)
    chip_cfg = StageConfig(template=chip_t)
    street_cfg = StageConfig(template=street_t)
    if models is not None:
        for stage_cfg, name in ((chip_cfg, "chip"), (street_cfg, "street")):
            path = models / f"{name}.ckpt"
            if not path.is_file():
                raise UntrainedModel(f"no {name} checkpoint at {path}; "
                                     f"run the train subcommand first")
            stage_cfg.classifier = nn.load_checkpoint(path)
    return chip_cfg, street_cfg


def _cmd_synth(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args.out)
    rows = generate_dataset(cfg.layout, cfg.dataset.class_mix(),
                            cfg.dataset.n_wafers, cfg.dataset.seed,
                            out / "dataset")
    print(f"synth: {cfg.dataset.n_wafers} wafers, {len(rows)} manifest rows "
          f"-> {out / 'dataset'}", file=sys.stderr)
    return 0


def _cmd_train(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args.out)
    pairs = _load_wafers(cfg, out)
    chip_cfg, street_cfg = _stage_configs(cfg)
    level = AugmentationLevel(cfg.augment_level)
    chip_cfg.augmentation = street_cfg.augmentation = level
    net_cfg = dict(block_widths=cfg.params.block_widths,
                   conv_dropout=cfg.params.conv_dropout,
                   dense1_units=cfg.params.dense1_units,
                   dense_dropout=cfg.params.dense_dropout)
    train_cfg = nn.TrainConfig(learning_rate=cfg.params.learning_rate,
                               batch_size=cfg.params.batch_size,
                               epochs=cfg.params.epochs, patience=0,
                               seed=derive_seed(cfg.train.seed, 0))
    models = out / "models"
    models.mkdir(exist_ok=True)

    ps = cfg.train.chip_patch_size
    chip_cfg.classifier = nn.Network(
        nn.NetworkConfig(n_classes=2, input_hw=(ps, ps), **net_cfg),
        seed=derive_seed(cfg.train.seed, 1))
    history = fit_chip_stage(pairs, chip_cfg, train_cfg)
    nn.save_checkpoint(chip_cfg.classifier, models / "chip.ckpt")
    nn.write_metrics(history, out / "history_chip.csv")
    print(f"train: chip stage {len(history)} epochs, "
          f"final val {history[-1].val_acc:.3f}", file=sys.stderr)

    ps = cfg.train.street_patch_size
    street_cfg.classifier = nn.Network(
        nn.NetworkConfig(n_classes=3, input_hw=(ps, ps), **net_cfg),
        seed=derive_seed(cfg.train.seed, 2))
    history = fit_street_stage(pairs, street_cfg, train_cfg)
    nn.save_checkpoint(street_cfg.classifier, models / "street.ckpt")
    nn.write_metrics(history, out / "history_street.csv")
    print(f"train: street stage {len(history)} epochs, "
          f"final val {history[-1].val_acc:.3f}", file=sys.stderr)
    return 0


def _cmd_eval(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args.out)
    ev = cfg.eval
    print(f"eval: building benchmark ({ev.n_wafers} wafers)", file=sys.stderr)
    bench = experiment.build_street_benchmark(
        cfg.layout, ev.n_wafers, ev.patch_size, ev.downscale, ev.seed,
        min_patches=ev.min_patches)
    print(f"eval: {len(bench)} balanced patches; running "
          f"{len(experiment.METHODS)} methods x {len(ev.aug_levels)} levels "
          f"x {ev.runs} runs", file=sys.stderr)
    rows = experiment.run_benchmark(bench, ev.aug_levels, cfg.params,
                                    n_runs=ev.runs, seed=ev.seed)
    evaluation.write_results(out / "results.csv", rows)
    truth = experiment.benchmark_truth_verdict(cfg.layout, ev.seed)
    write_svg(out / "benchmark_wafer.svg", WaferMap(verdict=truth))
    for r in rows:
        print(f"eval: {r.method} l={r.aug_level} "
              f"{r.mean_acc:.3f} +- {r.std_acc:.3f}", file=sys.stderr)
    print(f"eval: wrote {out / 'results.csv'} and "
          f"{out / 'benchmark_wafer.svg'}", file=sys.stderr)
    return 0


def _cmd_infer(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args.out)
    chip_cfg, street_cfg = _stage_configs(cfg, models=out / "models")
    verdict_dir = out / "verdicts"
    verdict_dir.mkdir(exist_ok=True)
    for wafer_path in args.wafers:
        wafer = read_pgm(wafer_path)
        verdict = run_shcnn(wafer, [chip_cfg, street_cfg])
        stem = Path(wafer_path).stem
        write_verdict(verdict_dir / f"{stem}.csv", verdict)
        summary = summarize_verdict(verdict)
        (verdict_dir / f"{stem}.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n")
        print(f"infer: {wafer_path} -> {verdict_dir / (stem + '.csv')} "
              f"{summary['chips']}", file=sys.stderr)
    return 0


def _cmd_report(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args.out)
    for verdict_path in args.verdicts:
        verdict = read_verdict(verdict_path)
        svg_path = out / (Path(verdict_path).stem + ".svg")
        write_svg(svg_path, WaferMap(verdict=verdict))
        print(f"report: {verdict_path} -> {svg_path}", file=sys.stderr)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "report": _cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        """Usage problems exit 1, not argparse's default 2."""
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="waferinspect",
                     description="Synthetic wafer dicing inspection workflow.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text, wafers=False, verdicts=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", default=None,
                       help="experiment config file (defaults apply if omitted)")
        p.add_argument("-o", "--out", default=None,
                       help="output directory (overrides [output] dir)")
        if wafers:
            p.add_argument("wafers", nargs="+", metavar="WAFER.pgm",
                           help="wafer images to classify")
        if verdicts:
            p.add_argument("verdicts", nargs="+", metavar="VERDICT.csv",
                           help="verdict tables to render")
        return p

    add("synth", "render a labeled synthetic wafer dataset")
    add("train", "fit the chip and street stage classifiers")
    add("eval", "run the method comparison benchmark")
    add("infer", "classify wafer images with trained stages", wafers=True)
    add("report", "render wafer map SVGs from verdict tables", verdicts=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("waferinspect: error: a subcommand is required", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        return _COMMANDS[args.command](cfg, args)
    except WaferInspectError as exc:
        print(f"waferinspect {args.command}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
