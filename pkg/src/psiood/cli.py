"""Command-line frontend: synth, fit, calibrate, detect, eval, sweep, report.

Exit codes: 0 success, 1 domain or input-file error (one-line diagnostic on
stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .calibration import (
    CalibrationSpec,
    SWEEP_METRICS,
    baseline_sweep,
    calibrate_baseline_on,
    calibrate_psi,
    default_grid,
    parse_grid,
    select_best,
    threshold_sweep,
)
from .core import Dataset, fit_model
from .detectors import (
    BaselineConfig,
    BaselineKind,
    energy_detect_batch,
    max_softmax_detect_batch,
    psi_detect_batch,
)
from .errors import PsiOodError
from .evaluation import distribution_report, evaluate
from .synth import SPLITS, generate

DETECTORS = {"psi": None, "msp": BaselineKind.MAX_SOFTMAX, "energy": BaselineKind.ENERGY}


class UsageError(Exception):
    pass


def _coverage(text: str) -> float:
    try:
        q = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid coverage {text!r}") from None
    if not 0.0 < q <= 1.0:
        raise argparse.ArgumentTypeError("coverage must lie in (0, 1]")
    return q


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="psiood",
        description="Logit-distribution OOD detection with a probability-score interpreter.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic logit splits from a spec document")
    s.add_argument("--config", required=True, help="synth spec JSON")
    s.add_argument("--out", required=True, help="output directory for <split>.csv files")
    s.add_argument("--seed", type=int, help="override the seed in the synth config")

    s = sub.add_parser("fit", help="fit per-class score functions from training logits")
    s.add_argument("--train", required=True)
    s.add_argument("--negative-set", help="logits used as the wrong-class distribution of every neuron")
    s.add_argument("--out", required=True, help="model JSON to write")

    s = sub.add_parser("calibrate", help="choose a threshold from validation misclassifications")
    s.add_argument("--validation", required=True)
    s.add_argument("--model", help="model JSON (required for psi)")
    s.add_argument("--model-out", help="where to write the calibrated model (default: update --model)")
    s.add_argument("--detector", choices=DETECTORS, default="psi")
    s.add_argument("--coverage", type=_coverage, default=0.75)
    s.add_argument("--grid", help="neglog:A:B:S, linear:A:B:S or comma list")
    s.add_argument("--out", help="calibration report JSON")

    s = sub.add_parser("detect", help="score logits and write per-sample decisions")
    _detector_args(s)
    s.add_argument("--out", required=True, help="decisions CSV")

    s = sub.add_parser("eval", help="evaluate decisions (or run a detector) against ground truth")
    _detector_args(s)
    s.add_argument("--decisions", help="decisions CSV; skips detection")
    s.add_argument("--out", required=True, help="evaluation report JSON")

    s = sub.add_parser("sweep", help="metrics over a threshold grid")
    s.add_argument("--model", help="model JSON (required for psi)")
    s.add_argument("--test", required=True)
    s.add_argument("--ood", required=True)
    s.add_argument("--detector", choices=DETECTORS, default="psi")
    s.add_argument("--grid", help="threshold grid; defaults to neglog:0.1:13:0.1 (required for energy)")
    s.add_argument("--select-best", choices=SWEEP_METRICS, metavar="METRIC",
                   help="report the grid maximiser of METRIC")
    s.add_argument("--out", required=True)

    s = sub.add_parser("report", help="per-class logit histograms and PS curves")
    s.add_argument("--model", required=True)
    for split in ("train", "validation", "test", "ood"):
        s.add_argument(f"--{split}")
    s.add_argument("--out", required=True)
    return p


def _detector_args(s):
    s.add_argument("--model", help="model JSON (required for psi)")
    s.add_argument("--test", help="in-distribution logits")
    s.add_argument("--ood", help="OOD logits")
    s.add_argument("--detector", choices=DETECTORS, default="psi")
    s.add_argument("--threshold", type=float, help="baseline threshold (msp/energy) or psi override")
    s.add_argument("--calibration", help="calibration report supplying the threshold")


def _concat(datasets) -> Dataset:
    datasets = [d for d in datasets if d is not None]
    if not datasets:
        raise UsageError("give --test and/or --ood")
    names = datasets[0].class_names
    for d in datasets[1:]:
        if d.class_names != names:
            raise PsiOodError("input files have different class manifests")
    return Dataset(
        names,
        [i for d in datasets for i in d.ids],
        np.concatenate([d.labels for d in datasets]),
        np.vstack([d.logits for d in datasets]),
    )


def _load(path):
    return None if path is None else io.read_logits(path)


def _threshold(args, detector: str):
    if args.threshold is not None:
        return args.threshold
    if args.calibration:
        cal = io.read_calibration(args.calibration)
        if cal.detector != detector:
            raise PsiOodError(f"calibration report is for {cal.detector!r}, not {detector!r}")
        return cal.chosen_threshold
    return None


def _decide(args, data: Dataset):
    t = _threshold(args, args.detector)
    kind = DETECTORS[args.detector]
    if kind is None:
        if not args.model:
            raise UsageError("--model is required for the psi detector")
        model = io.read_model(args.model)
        return psi_detect_batch(model, data.logits, data.ids, t=t)
    if t is None:
        raise UsageError(f"the {args.detector} detector needs --threshold or --calibration")
    cfg = BaselineConfig(kind, t)
    fn = max_softmax_detect_batch if kind is BaselineKind.MAX_SOFTMAX else energy_detect_batch
    return fn(cfg, data.logits, data.ids)


def cmd_synth(args):
    spec = io.read_synth_spec(args.config)
    if args.seed is not None:
        spec = type(spec).from_dict({**spec.to_dict(), "seed": args.seed})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = generate(spec)
    for name in SPLITS:
        io.write_logits(out / f"{name}.csv", splits[name])


def cmd_fit(args):
    train = io.read_logits(args.train)
    neg = _load(args.negative_set)
    meta = {"source": Path(args.train).name}
    if neg is not None:
        meta["negative_source"] = Path(args.negative_set).name
        if neg.class_names != train.class_names:
            raise PsiOodError("negative set class manifest differs from the training set")
    model = fit_model(train, neg, metadata=meta)
    io.write_model(args.out, model)


def cmd_calibrate(args):
    validation = io.read_logits(args.validation)
    grid = parse_grid(args.grid) if args.grid else None
    spec = CalibrationSpec(args.coverage, grid)
    kind = DETECTORS[args.detector]
    if kind is None:
        if not args.model:
            raise UsageError("--model is required to calibrate the psi detector")
        model = io.read_model(args.model)
        if validation.class_names != model.class_names:
            raise PsiOodError("validation class manifest differs from the model")
        result, calibrated = calibrate_psi(model, validation, spec)
        io.write_model(args.model_out or args.model, calibrated)
    else:
        result = calibrate_baseline_on(kind, validation, spec)
    if args.out:
        io.write_report(args.out, result)
    print(f"{args.detector} threshold {result.chosen_threshold!r} "
          f"(coverage {result.flagged_count}/{result.misclassified_count})")


def cmd_detect(args):
    data = _concat([_load(args.test), _load(args.ood)])
    decisions = _decide(args, data)
    io.write_decisions(args.out, decisions, data.class_names)


def cmd_eval(args):
    truth = _concat([_load(args.test), _load(args.ood)])
    if args.decisions:
        decisions = io.read_decisions(args.decisions, truth.class_names)
    else:
        decisions = _decide(args, truth)
    report = evaluate(decisions, truth)
    io.write_report(args.out, report)
    print(f"weighted accuracy {report.weighted_accuracy:.3f} "
          f"(classification {report.classification_accuracy:.3f}, OOD {report.ood_detection_rate:.3f})")


def cmd_sweep(args):
    test, ood = io.read_logits(args.test), io.read_logits(args.ood)
    kind = DETECTORS[args.detector]
    if args.grid:
        grid = parse_grid(args.grid)
    elif kind is BaselineKind.ENERGY:
        raise UsageError("--grid is required for an energy sweep")
    else:
        grid = default_grid()
    if kind is None:
        if not args.model:
            raise UsageError("--model is required for a psi sweep")
        rows = threshold_sweep(io.read_model(args.model), test, ood, grid)
    else:
        rows = baseline_sweep(kind, test, ood, grid)
    best = select_best(rows, args.select_best) if args.select_best else None
    io.write_report(args.out, rows, detector=args.detector, best=best, metric=args.select_best)
    if best is not None:
        print(f"best {args.select_best} {getattr(best, args.select_best):.3f} at threshold {best.threshold!r}")


def cmd_report(args):
    model = io.read_model(args.model)
    splits = {}
    for name in ("train", "validation", "test", "ood"):
        path = getattr(args, name)
        if path:
            splits[name] = io.read_logits(path)
    if not splits:
        raise UsageError("give at least one of --train/--validation/--test/--ood")
    io.write_report(args.out, distribution_report(model, splits))


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "calibrate": cmd_calibrate,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"psiood {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (PsiOodError, OSError, UnicodeDecodeError) as e:
        msg = e.strerror + f": {e.filename}" if isinstance(e, OSError) and e.strerror and e.filename else str(e)
        print(f"psiood {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
