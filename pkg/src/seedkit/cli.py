"""Command-line entry point: ``seedkit {sprites extract, synth, eval, measure}``.

Every subcommand accepts ``--config FILE`` (TOML, flat keys). Command-line
flags override file values, and the fully resolved settings are written to
``run-config.json`` next to the outputs.
"""

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from ._io import atomic_output_dir, atomic_write_text, list_pngs, read_rgba, write_png

CONFIG_HELP = """\
config file keys (TOML, flat; unknown keys are rejected):
  synth:    canvas_size, images_per_class, count_range, class_count_ranges,
            scale_range, rotation_range, brightness_range,
            min_visible_fraction, max_place_retries, master_seed
  sprites:  alpha_threshold, min_area
  eval:     iou ("bbox" or "mask"), ap_max, score_threshold
  measure:  coin_stat ("median" or "mean"), class_filter, coin_class
"""

EXTRACT_DEFAULTS = {"alpha_threshold": 128, "min_area": 1}
EVAL_DEFAULTS = {"iou": "mask", "ap_max": 0.95, "score_threshold": None}
MEASURE_DEFAULTS = {"coin_stat": "median", "class_filter": None, "coin_class": "penny"}


class CliError(Exception):
    pass


def _synth_keys():
    from .compositor import SynthConfig
    return {f.name for f in fields(SynthConfig)}


def load_config(path):
    """Read a TOML config file and reject keys no subcommand understands."""
    if path is None:
        return {}
    try:
        import tomllib
    except ImportError:  # Python < 3.11
        import tomli as tomllib
    path = Path(path)
    if not path.is_file():
        raise CliError(f"config file not found: {path}")
    try:
        values = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"invalid TOML in {path}: {exc}") from None
    known = _synth_keys() | set(EXTRACT_DEFAULTS) | set(EVAL_DEFAULTS) | set(MEASURE_DEFAULTS)
    unknown = sorted(set(values) - known)
    if unknown:
        raise CliError(f"unknown config field(s) in {path}: {', '.join(unknown)}")
    return values


def resolve(defaults, file_values, overrides):
    """defaults < config file < flags (flags left at None do not override)."""
    out = dict(defaults)
    out.update({k: v for k, v in file_values.items() if k in defaults})
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def run_config_text(command, settings, inputs):
    doc = {"tool": "seedkit", "version": __version__, "command": command,
           "settings": settings, "inputs": inputs}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


# subcommands -------------------------------------------------------------------------------

def cmd_extract(args):
    from .compositor import extract_sprites

    settings = resolve(EXTRACT_DEFAULTS, load_config(args.config),
                       {"alpha_threshold": args.alpha_threshold, "min_area": args.min_area})
    src = Path(args.input)
    if not src.is_dir():
        raise CliError(f"input directory not found: {src}")
    groups = [(Path("."), list_pngs(src))]
    groups += [(Path(d.name), list_pngs(d)) for d in sorted(src.iterdir()) if d.is_dir()]
    if not any(files for _, files in groups):
        raise CliError(f"no PNG files found in {src}")
    written = 0
    with atomic_output_dir(args.output) as tmp:
        for rel, files in groups:
            for path in files:
                sprites = extract_sprites(read_rgba(path), settings["alpha_threshold"],
                                          settings["min_area"], source_id=path.stem)
                (tmp / rel).mkdir(parents=True, exist_ok=True)
                for k, sp in enumerate(sprites):
                    write_png(tmp / rel / f"{path.stem}_{k:03d}.png", sp.pixels)
                written += len(sprites)
        (tmp / "run-config.json").write_text(
            run_config_text("sprites extract", settings, {"input": str(args.input)}),
            encoding="utf-8", newline="\n")
    print(f"wrote {written} sprites to {args.output}")


def cmd_synth(args):
    from .compositor import SynthConfig, generate_dataset

    file_values = load_config(args.config)
    values = {k: v for k, v in file_values.items() if k in _synth_keys()}
    if args.seed is not None:
        values["master_seed"] = args.seed
    config = SynthConfig.from_dict(values)
    if args.jobs < 1:
        raise CliError(f"--jobs must be >= 1, got {args.jobs}")
    # the job count is left out so output bytes do not depend on it
    text = run_config_text("synth", config.to_dict(),
                           {"sprites": str(args.sprites), "backgrounds": str(args.backgrounds)})
    manifest = generate_dataset(config, args.sprites, args.backgrounds, args.out,
                                jobs=args.jobs, extra_files={"run-config.json": text})
    print(f"wrote {len(manifest['images'])} images to {args.out}")


def _read_input(path, what):
    path = Path(path)
    if not path.is_file():
        raise CliError(f"{what} file not found: {path}")
    return path.read_bytes()


def cmd_eval(args):
    from .metrics import evaluate_dataset

    settings = resolve(EVAL_DEFAULTS, load_config(args.config),
                       {"iou": args.iou, "ap_max": args.ap_max, "score_threshold": args.score_threshold})
    if settings["iou"] not in ("bbox", "mask"):
        raise CliError(f"iou must be 'bbox' or 'mask', got {settings['iou']!r}")
    gt = _read_input(args.gt, "ground-truth")
    pred = _read_input(args.pred, "prediction")
    report = evaluate_dataset(gt, pred, settings["iou"], settings["ap_max"], settings["score_threshold"])
    out = Path(args.report)
    table_path = out.with_suffix(".txt")
    if table_path == out:
        table_path = out.with_name(out.name + ".table.txt")
    table = report.to_table()
    atomic_write_text(out, json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    atomic_write_text(table_path, table + "\n")
    atomic_write_text(out.parent / "run-config.json", run_config_text(
        "eval", settings, {"gt": str(args.gt), "pred": str(args.pred)}))
    print(table)


def cmd_measure(args):
    from .morphometry import (
        LINEAR_SCALE_NOTE, calibrate, load_coco_instances, load_coin_masks,
        load_dataset_instances, measure_image, write_csv,
    )

    settings = resolve(MEASURE_DEFAULTS, load_config(args.config),
                       {"coin_stat": args.coin_stat, "class_filter": args.class_filter,
                        "coin_class": args.coin_class})
    if settings["coin_stat"] not in ("median", "mean"):
        raise CliError(f"coin_stat must be 'median' or 'mean', got {settings['coin_stat']!r}")
    if args.masks is not None:
        if not (Path(args.masks) / "manifest.json").is_file():
            raise CliError(f"--masks must be a synth dataset directory with manifest.json: {args.masks}")
        source = load_dataset_instances(args.masks)
    else:
        _read_input(args.coco, "COCO")
        source = load_coco_instances(args.coco)
    calibration = calibrate(load_coin_masks(args.coins, settings["coin_class"]), settings["coin_stat"])
    results = []
    for image, items in source:
        records, _ = measure_image(items, calibration, settings["class_filter"])
        results.append((image, records))
    out = Path(args.out)
    atomic_write_text(out, write_csv(results, calibration))
    meta = dict(settings, calibration=calibration.to_dict(), linear_scale=LINEAR_SCALE_NOTE)
    atomic_write_text(out.parent / "run-config.json", run_config_text(
        "measure", meta, {"masks": args.masks, "coco": args.coco, "coins": str(args.coins)}))
    n = sum(len(r) for _, r in results)
    print(f"measured {n} instances in {len(results)} images; "
          f"median coin {calibration.median_coin_px:g} px, {calibration.mm2_per_px:.6g} mm2/px")


# parser ------------------------------------------------------------------------------------

def build_parser():
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="seedkit", formatter_class=fmt, epilog=CONFIG_HELP,
        description="Build synthetic seed-image datasets, then score detectors or measure seeds against a coin.")
    parser.add_argument("--version", action="version", version=f"seedkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p):
        p.add_argument("--config", metavar="FILE", help="TOML config file (flat keys)")

    sprites = sub.add_parser("sprites", help="sprite utilities")
    sprites_sub = sprites.add_subparsers(dest="sprites_command", required=True, metavar="ACTION")
    ex = sprites_sub.add_parser("extract", formatter_class=fmt, epilog=CONFIG_HELP,
                                help="cut one sprite per opaque blob of each RGBA PNG")
    ex.add_argument("--input", required=True, metavar="DIR",
                    help="RGBA PNGs, optionally in <class>/ subdirectories")
    ex.add_argument("--output", required=True, metavar="DIR")
    ex.add_argument("--alpha-threshold", type=int, metavar="N", help="opaque if alpha >= N (default 128)")
    ex.add_argument("--min-area", type=int, metavar="N", help="drop blobs under N pixels (default 1)")
    common(ex)
    ex.set_defaults(func=cmd_extract)

    sy = sub.add_parser("synth", formatter_class=fmt, epilog=CONFIG_HELP,
                        help="generate a synthetic dataset")
    sy.add_argument("--sprites", required=True, metavar="DIR", help="<class>/*.png sprite library")
    sy.add_argument("--backgrounds", required=True, metavar="DIR")
    sy.add_argument("--out", required=True, metavar="DIR")
    sy.add_argument("--seed", type=int, metavar="N", help="master RNG seed (overrides master_seed)")
    sy.add_argument("--jobs", type=int, default=1, metavar="N",
                    help="worker processes; outputs do not depend on it")
    common(sy)
    sy.set_defaults(func=cmd_synth)

    ev = sub.add_parser("eval", formatter_class=fmt, epilog=CONFIG_HELP,
                        help="Recall50, AP50 and AP over an IoU range")
    ev.add_argument("--gt", required=True, metavar="FILE", help="COCO ground truth JSON")
    ev.add_argument("--pred", required=True, metavar="FILE", help="COCO results JSON")
    ev.add_argument("--iou", choices=("bbox", "mask"), help="IoU used for AP (default mask)")
    ev.add_argument("--ap-max", type=float, metavar="X", help="upper IoU threshold of the AP range (default 0.95)")
    ev.add_argument("--score-threshold", type=float, metavar="X", help="drop detections scoring below X")
    ev.add_argument("--report", required=True, metavar="FILE",
                    help="JSON report; a text table is written beside it with suffix .txt")
    common(ev)
    ev.set_defaults(func=cmd_eval)

    me = sub.add_parser("measure", formatter_class=fmt, epilog=CONFIG_HELP,
                        help="coin-calibrated seed length, width, area and count")
    src = me.add_mutually_exclusive_group(required=True)
    src.add_argument("--masks", metavar="DIR", help="synth dataset directory (manifest.json + masks/)")
    src.add_argument("--coco", metavar="FILE", help="COCO file with polygon segmentations")
    me.add_argument("--coins", required=True, metavar="DIR",
                    help="coin masks: a synth dataset, or PNG masks (one color or blob per coin)")
    me.add_argument("--coin-stat", choices=("median", "mean"), help="coin area statistic (default median)")
    me.add_argument("--coin-class", metavar="NAME", help="coin class in a dataset (default penny)")
    me.add_argument("--class-filter", metavar="NAME", help="measure only this class")
    me.add_argument("--out", required=True, metavar="FILE.csv")
    common(me)
    me.set_defaults(func=cmd_measure)
    return parser


def run(argv=None):
    """Parse ``argv`` and execute; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except (CliError, ValueError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"seedkit {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
