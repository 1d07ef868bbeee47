"""
Command-Line Interface
Transform images, inspect filters, measure boundary effects, and train or
compare the toy networks. Tables go to stdout (or a file) as CSV.

Exit codes: 0 success, 2 bad arguments, 1 runtime failure.
"""

import argparse
import sys
import os

import numpy as np
import pandas as pd

# Add parent directory to path so we can import waveseg
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from waveseg import config
from waveseg.dataset import gen_dataset
from waveseg.errors import ArgumentError, DivergenceError, UnknownWaveletError, WaveSegError
from waveseg.filters import get_wavelet, list_wavelets, validate
from waveseg.imageio import load_pyramid, read_header, read_label_map, read_pnm, save_previews, save_pyramid, write_pnm
from waveseg.metrics import ConfusionMatrix, class_iou, format_metric, global_accuracy, mean_class_accuracy, miou, psnr
from waveseg.transform import boundary_sweep, dwt_multilevel, idwt_multilevel
from waveseg.wadsnet import build_net, compare_duals, log_frame, logs_frame, train
from waveseg.workflow import format_trace_table

BOUNDARY_DEFAULT = "haar,db2,db3,db4,db5,db6"


def _write_csv(frame: pd.DataFrame, out=None):
    target = sys.stdout if out in (None, "-") else out
    frame.to_csv(target, index=False, lineterminator="\n", float_format="%.17g", na_rep="nan")


def _metric_rows(pairs) -> pd.DataFrame:
    return pd.DataFrame([{"metric": k, "value": format_metric(v)} for k, v in pairs])


def _comma_list(text: str) -> list:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ArgumentError("expected a comma separated list")
    return items


def _int_list(text: str) -> list:
    try:
        return [int(t) for t in _comma_list(text)]
    except ValueError:
        raise ArgumentError(f"expected comma separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_filters(args) -> int:
    if args.list:
        print("\n".join(list_wavelets()))
        return 0
    names = [args.wavelet] if args.wavelet else list_wavelets()
    specs = [get_wavelet(n) for n in names]
    rows = [
        {"wavelet": spec.name, "filter": f, "index": i, "value": v}
        for spec in specs
        for f in ("dec_lo", "dec_hi", "rec_lo", "rec_hi")
        for i, v in enumerate(getattr(spec, f))
    ]
    _write_csv(pd.DataFrame(rows))
    if args.validate:
        reports = [validate(spec) for spec in specs]
        _write_csv(pd.concat([r.to_frame() for r in reports], ignore_index=True))
        if not all(r.passed for r in reports):
            return 1
    return 0


def cmd_dwt(args) -> int:
    image = read_pnm(args.input)
    pyramid = dwt_multilevel(image.tensor, args.wavelet, 2, args.mode, args.levels)
    save_pyramid(pyramid, args.out_dir)
    if args.preview:
        save_previews(pyramid, args.preview)

    rows = []
    for i, level in enumerate(pyramid.levels, start=1):
        energies = {t: c.norm() ** 2 for t, c in level.components().items()}
        total = sum(energies.values())
        for tag, energy in energies.items():
            rows.append({"level": i, "tag": tag, "energy": energy,
                         "fraction": energy / total if total else 0.0})
    _write_csv(pd.DataFrame(rows))
    return 0


def cmd_idwt(args) -> int:
    header = read_header(args.in_dir)
    for flag, key in ((args.wavelet, "wavelet"), (args.mode, "mode")):
        if flag is not None and flag != header[key]:
            raise WaveSegError(f"{key} {flag!r} does not match the stored {key} {header[key]!r}")
    pyramid = load_pyramid(args.in_dir)
    write_pnm(args.output, idwt_multilevel(pyramid))
    return 0


def cmd_psnr(args) -> int:
    a = read_pnm(args.first).tensor
    b = read_pnm(args.second).tensor
    value = psnr(a, b, args.peak)
    mse = float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))
    _write_csv(_metric_rows([("psnr", value), ("mse", mse)]))
    return 0


def cmd_evalseg(args) -> int:
    cm = ConfusionMatrix(args.classes).update(read_label_map(args.truth), read_label_map(args.pred))
    mean, _ = miou(cm)
    pairs = [("global_accuracy", global_accuracy(cm)), ("mIoU", mean),
             ("mean_class_accuracy", mean_class_accuracy(cm))]
    pairs += [(f"IoU_{k}", v) for k, v in enumerate(class_iou(cm))]
    _write_csv(_metric_rows(pairs))
    if args.confusion:
        _write_csv(cm.to_frame(normalized=True).reset_index(), args.confusion)
    return 0


def cmd_boundary(args) -> int:
    frame = boundary_sweep(_comma_list(args.wavelet_list), args.mode, args.size, args.seed)
    _write_csv(frame[["wavelet", "affected_band_width", "max_interior_err", "max_boundary_err"]])
    return 0


def cmd_train(args) -> int:
    net = build_net(args.kind, args.wavelet, args.seed, mode=args.mode)
    dataset = gen_dataset(args.samples, args.size, args.size, args.seed, depth=net.depth)
    try:
        log = train(net, dataset, epochs=args.epochs, lr=args.lr, momentum=args.momentum,
                    weight_decay=args.weight_decay, batch_size=args.batch_size, verbose=args.verbose)
    except DivergenceError as exc:
        _write_csv(log_frame(exc.log), args.out_csv)
        raise
    _write_csv(log_frame(log), args.out_csv)
    return 0


def cmd_compare(args) -> int:
    try:
        report = compare_duals(
            _int_list(args.seeds), _comma_list(args.kinds), args.wavelet, args.mode,
            epochs=args.epochs, num_train=args.samples, num_test=args.test_samples,
            image_size=args.size, lr=args.lr, verbose=args.verbose,
        )
    except DivergenceError as exc:
        _write_csv(logs_frame(exc.logs), args.out_csv)
        print(format_trace_table(exc.trace), file=sys.stderr)
        raise
    _write_csv(report.rows, args.out_csv)
    if args.summary:
        report.summary.to_csv(sys.stderr, index=False, lineterminator="\n")
        report.overview.to_csv(sys.stderr, index=False, lineterminator="\n")
        for kind, cm in report.confusions.items():
            print(f"# {kind}: % of each ground-truth row, pooled over seeds", file=sys.stderr)
            cm.to_frame(config.CLASS_NAMES, normalized=True).reset_index().to_csv(
                sys.stderr, index=False, lineterminator="\n", float_format="%.2f")
        print(format_trace_table(report.trace), file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="waveseg", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filters", help="print filter coefficients")
    p.add_argument("--wavelet", help="one wavelet (default: all)")
    p.add_argument("--list", action="store_true", help="only list the shipped wavelet names")
    p.add_argument("--validate", action="store_true", help="append the filter-bank identity checks")
    p.set_defaults(func=cmd_filters)

    p = sub.add_parser("dwt", help="decompose a PGM/PPM image into subband files")
    p.add_argument("input")
    p.add_argument("out_dir")
    p.add_argument("--wavelet", default=config.DEFAULT_WAVELET)
    p.add_argument("--mode", default=config.DEFAULT_MODE, choices=config.SUPPORTED_MODES)
    p.add_argument("--levels", type=int, default=1)
    p.add_argument("--preview", metavar="DIR", help="also write 8-bit previews of every subband")
    p.set_defaults(func=cmd_dwt)

    p = sub.add_parser("idwt", help="rebuild an image from a subband directory")
    p.add_argument("in_dir")
    p.add_argument("output")
    p.add_argument("--wavelet", help="expected wavelet; must match the stored header")
    p.add_argument("--mode", choices=config.SUPPORTED_MODES, help="expected mode; must match the stored header")
    p.set_defaults(func=cmd_idwt)

    p = sub.add_parser("psnr", help="PSNR between two images")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--peak", type=float, default=1.0)
    p.set_defaults(func=cmd_psnr)

    p = sub.add_parser("evalseg", help="segmentation metrics of two label maps")
    p.add_argument("truth")
    p.add_argument("pred")
    p.add_argument("--classes", type=int, default=len(config.CLASS_NAMES))
    p.add_argument("--confusion", metavar="CSV", help="also write the row-normalized confusion matrix (percent)")
    p.set_defaults(func=cmd_evalseg)

    p = sub.add_parser("boundary", help="reconstruction error near image edges")
    p.add_argument("--wavelet-list", default=BOUNDARY_DEFAULT)
    p.add_argument("--mode", default=config.DEFAULT_MODE, choices=config.SUPPORTED_MODES)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_boundary)

    for name, helptext in (("train", "train one toy network"), ("compare", "compare dual structures")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("out_csv")
        p.add_argument("--wavelet", default=config.DEFAULT_WAVELET)
        p.add_argument("--mode", default=config.DEFAULT_MODE, choices=config.SUPPORTED_MODES)
        p.add_argument("--epochs", type=int, default=config.EPOCHS)
        p.add_argument("--samples", type=int, default=config.NUM_SAMPLES)
        p.add_argument("--size", type=int, default=config.IMAGE_SIZE)
        p.add_argument("--lr", type=float, default=config.LEARNING_RATE)
        p.add_argument("--verbose", action="store_true", default=config.VERBOSE)
        if name == "train":
            p.add_argument("--kind", default="wads")
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--momentum", type=float, default=config.MOMENTUM)
            p.add_argument("--weight-decay", type=float, default=config.WEIGHT_DECAY)
            p.add_argument("--batch-size", type=int, default=config.BATCH_SIZE)
            p.set_defaults(func=cmd_train)
        else:
            p.add_argument("--seeds", default="0,1,2")
            p.add_argument("--kinds", default="wads,puds")
            p.add_argument("--test-samples", type=int, default=config.NUM_TEST_SAMPLES)
            p.add_argument("--summary", action="store_true", help="print medians and the stage trace to stderr")
            p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    try:
        return args.func(args)
    except (ArgumentError, UnknownWaveletError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (WaveSegError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
