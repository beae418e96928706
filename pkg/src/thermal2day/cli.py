"""Command-line entry points: train, translate, eval-apce, eval-miou,
gen-synthetic.

Exit codes: 0 success, 2 invalid configuration, 3 data/checkpoint errors,
4 training aborted on a non-finite loss, 1 anything else.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image as PILImage

from .config import build_config, load_config_file
from .data import load_dataset, preprocess
from .errors import CheckpointError, ConfigError, DataError, DivergenceError
from .metrics import ThresholdSweep, apce, confusion_matrix, miou, write_apce_report
from .synthetic import generate_dataset
from .training import Trainer, load_generators, prepare_training_data, translate_image

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _parse_overrides(pairs):
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"override must be key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        overrides[key.strip()] = value.strip()
    return overrides


def _load_float_image(path):
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
    return arr.astype(np.float32) / 255.0


def _matched_files(dir_x, dir_y, label_x, label_y):
    dir_x, dir_y = Path(dir_x), Path(dir_y)
    for d in (dir_x, dir_y):
        if not d.is_dir():
            raise DataError(f"not a directory: {d}")
    names_x = {p.name for p in dir_x.iterdir() if p.is_file()}
    names_y = {p.name for p in dir_y.iterdir() if p.is_file()}
    if not names_x or not names_y:
        raise DataError(f"empty directory: {dir_x if not names_x else dir_y}")
    if names_x != names_y:
        missing = sorted(names_x ^ names_y)[:5]
        raise DataError(
            f"{label_x} and {label_y} file sets differ (e.g. {', '.join(missing)})"
        )
    return [(dir_x / n, dir_y / n) for n in sorted(names_x)]


def cmd_train(args):
    file_values = load_config_file(args.config) if args.config else {}
    overrides = _parse_overrides(args.override)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out_dir"] = args.out
    cfg = build_config(file_values, overrides)
    if not cfg.dir_a or not cfg.dir_b:
        raise ConfigError("dir_a and dir_b must be set for training")
    ds = load_dataset(cfg.dir_a, cfg.dir_b, skip_undecodable=cfg.skip_undecodable)
    cache_dir = Path(cfg.out_dir) / "edge_cache"
    data = prepare_training_data(ds, cfg, cache_dir=cache_dir)
    trainer = Trainer(cfg, data)
    records = trainer.run()
    last = records[-1] if records else {}
    print(
        f"trained {trainer.iteration} iterations; "
        f"final total loss {last.get('total', float('nan')):.4f}; "
        f"outputs under {cfg.out_dir}"
    )
    return EXIT_OK


def cmd_translate(args):
    g_ab, g_ba, cfg = load_generators(args.checkpoint)
    generator = g_ab if args.direction == "a2b" else g_ba
    ds_dir = Path(args.input)
    if not ds_dir.is_dir():
        raise DataError(f"not a directory: {ds_dir}")
    files = sorted(
        p for p in ds_dir.iterdir()
        if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp")
    )
    if not files:
        raise DataError(f"no input images in {ds_dir}")
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .data import Domain, ImageSample, decode_image_file

    pre = cfg.preprocess()
    domain = Domain.NTIR if args.direction == "a2b" else Domain.DC
    for path in files:
        try:
            pixels, _ = decode_image_file(path)
        except Exception as exc:
            raise DataError(f"undecodable file {path}: {exc}") from exc
        sample = preprocess(ImageSample(pixels, domain, path.stem), pre)
        translated = translate_image(generator, sample.pixels)
        data = np.round(translated * 255.0).astype(np.uint8)
        PILImage.fromarray(data).save(out_dir / f"{path.stem}.png")
    print(f"translated {len(files)} images to {out_dir}")
    return EXIT_OK


def cmd_eval_apce(args):
    pairs = _matched_files(args.sources, args.outputs, "sources", "outputs")
    sources = [_load_float_image(p) for p, _ in pairs]
    outputs = [_load_float_image(q) for _, q in pairs]
    try:
        report = apce(sources, outputs, ThresholdSweep())
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    write_apce_report(report, args.out)
    print(
        f"apce {report.apce:.6f} over {report.n_images} images, "
        f"{report.skipped_pairs} skipped pairs; reports in {args.out}"
    )
    return EXIT_OK


def cmd_eval_miou(args):
    pairs = _matched_files(args.pred, args.gt, "pred", "gt")
    total = np.zeros((args.classes, args.classes), dtype=np.int64)
    for pred_path, gt_path in pairs:
        with PILImage.open(pred_path) as im:
            pred = np.asarray(im)
        with PILImage.open(gt_path) as im:
            gt = np.asarray(im)
        try:
            total += confusion_matrix(pred, gt, args.classes, args.ignore_label)
        except ValueError as exc:
            raise DataError(f"{pred_path.name}: {exc}") from exc
    inter = np.diag(total).astype(np.float64)
    union = total.sum(axis=0) + total.sum(axis=1) - np.diag(total)
    present = total.sum(axis=1) > 0
    iou = np.full(args.classes, np.nan)
    np.divide(inter, union, out=iou, where=present & (union > 0))
    mean_iou = float(np.nanmean(iou[present]))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "miou.json").write_text(
        json.dumps(
            {
                "miou": mean_iou,
                "per_class_iou": [None if np.isnan(v) else v for v in iou],
            },
            indent=2,
        )
        + "\n"
    )
    print(f"miou {mean_iou:.6f} over {len(pairs)} label pairs; report in {out_dir}")
    return EXIT_OK


def cmd_gen_synthetic(args):
    dir_a, dir_b = generate_dataset(
        args.out, n_a=args.n_a, n_b=args.n_b, size=args.size, seed=args.seed
    )
    print(f"wrote {args.n_a} thermal images to {dir_a} and {args.n_b} color to {dir_b}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="thermal2day",
        description="Unpaired nighttime-thermal to daytime-color translation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the training loop")
    p_train.add_argument("--config", help="key=value config file")
    p_train.add_argument(
        "--override", action="append", metavar="KEY=VALUE",
        help="config override, repeatable; wins over the file",
    )
    p_train.add_argument("--seed", type=int, help="override the config seed")
    p_train.add_argument("--out", help="override the output directory")
    p_train.set_defaults(func=cmd_train)

    p_tr = sub.add_parser("translate", help="translate a directory of images")
    p_tr.add_argument("--checkpoint", required=True)
    p_tr.add_argument("--input", required=True)
    p_tr.add_argument("--output", required=True)
    p_tr.add_argument("--direction", choices=("a2b", "b2a"), default="a2b")
    p_tr.set_defaults(func=cmd_translate)

    p_apce = sub.add_parser(
        "eval-apce", help="edge-consistency metric over matched directories"
    )
    p_apce.add_argument("--sources", required=True)
    p_apce.add_argument("--outputs", required=True)
    p_apce.add_argument("--out", default="reports")
    p_apce.set_defaults(func=cmd_eval_apce)

    p_miou = sub.add_parser("eval-miou", help="mean IoU over matched label maps")
    p_miou.add_argument("--pred", required=True)
    p_miou.add_argument("--gt", required=True)
    p_miou.add_argument("--classes", type=int, required=True)
    p_miou.add_argument("--ignore-label", type=int, default=None)
    p_miou.add_argument("--out", default="reports")
    p_miou.set_defaults(func=cmd_eval_miou)

    p_gen = sub.add_parser("gen-synthetic", help="write a procedural dataset")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--n-a", type=int, default=16)
    p_gen.add_argument("--n-b", type=int, default=16)
    p_gen.add_argument("--size", type=int, default=64)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None):
    # single-thread torch is both faster at these tensor sizes and
    # reproducible run-to-run
    torch.set_num_threads(1)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
