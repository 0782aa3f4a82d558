"""File formats: logit CSV, decision CSV, model and report JSON documents.

Floats in JSON documents are written with 17 significant digits, which
round-trips every IEEE double exactly. Logit CSV files use the shortest
round-tripping repr. Layouts are described in ``docs/formats.md``.
"""

from __future__ import annotations

import csv
import json
import math
import re
from fractions import Fraction
from pathlib import Path

import jsonschema
import numpy as np

from .calibration import CalibrationResult, SweepRow
from .core import OOD, UNKNOWN, ClassScoreFunction, Dataset, DetectorModel, GaussianStats
from .detectors import Code, DetectorDecision, Subtype, Verdict
from .errors import (
    DuplicateIdError,
    FormatError,
    HeaderMismatchError,
    NonNumericLogitError,
    PsiOodError,
    SchemaViolationError,
    UnknownLabelError,
    UnwritablePathError,
    VersionMismatchError,
)
from .evaluation import DistributionReport, EvalReport, round3
from .synth import SynthSpec

FORMAT_VERSION = "1.0"
OOD_TOKEN = "__OOD__"
UNKNOWN_TOKEN = "?"
RESERVED_LABELS = (OOD_TOKEN, UNKNOWN_TOKEN)
LOGIT_PREFIX = "logit_"

_FLOAT_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?\Z")


# ---------------------------------------------------------------- JSON writer

def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise PsiOodError(f"cannot serialise non-finite value {x!r}")
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _emit(obj, level: int, out: list):
    pad = "  " * (level + 1)
    end = "  " * level
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if obj is None or isinstance(obj, (bool, np.bool_)):
        out.append(json.dumps(None if obj is None else bool(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(str(k), ensure_ascii=False)}: ")
            _emit(v, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            parts = []
            for v in obj:
                _emit(v, 0, parts)
                parts.append(", ")
            out.append("[" + "".join(parts[:-1]) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with every float at 17 significant digits."""
    out: list = []
    _emit(obj, 0, out)
    return "".join(out) + "\n"


def _write_text(path, text: str):
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise UnwritablePathError(f"cannot write {path}: {e.strerror or e}") from None


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e.msg}", path, e.lineno, e.colno) from None
    if not isinstance(doc, dict):
        raise SchemaViolationError("top-level JSON value must be an object", path)
    return doc


def _check_version(doc: dict, path, fmt: str):
    if doc.get("format") != fmt:
        raise SchemaViolationError(f"expected a {fmt!r} document, got format {doc.get('format')!r}", path)
    version = doc.get("format_version")
    if not isinstance(version, str) or not re.fullmatch(r"\d+\.\d+", version):
        raise SchemaViolationError("format_version must be a 'MAJOR.MINOR' string", path)
    if version.split(".")[0] != FORMAT_VERSION.split(".")[0]:
        raise VersionMismatchError(
            f"unsupported format_version {version} (this reader handles {FORMAT_VERSION.split('.')[0]}.x)", path
        )


# ---------------------------------------------------------------- logits CSV

def read_logits(path) -> Dataset:
    """Read a logit file: ``id,label,logit_<class>...``.

    Labels are class names, ``__OOD__`` or ``?``. Every malformed row is
    reported with its line number (and column for bad numbers).
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise HeaderMismatchError("empty file, expected a header row", path, 1) from None
        if len(header) < 4 or header[0] != "id" or header[1] != "label":
            raise HeaderMismatchError("header must start with 'id,label' followed by >= 2 logit columns", path, 1)
        names = []
        for j, col in enumerate(header[2:], start=3):
            if not col.startswith(LOGIT_PREFIX) or len(col) == len(LOGIT_PREFIX):
                raise HeaderMismatchError(f"column {col!r} is not 'logit_<class name>'", path, 1, j)
            names.append(col[len(LOGIT_PREFIX):])
        if len(set(names)) != len(names):
            raise HeaderMismatchError("duplicate class names in header", path, 1)
        for n in names:
            if n in RESERVED_LABELS:
                raise HeaderMismatchError(f"class name {n!r} is reserved", path, 1)
        lookup = {n: k for k, n in enumerate(names)}
        C = len(names)
        ids, labels, rows, seen = [], [], [], {}
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != C + 2:
                raise FormatError(f"expected {C + 2} fields, got {len(row)}", path, line)
            sid, lab = row[0], row[1]
            if not sid:
                raise FormatError("empty sample id", path, line, 1)
            if sid in seen:
                raise DuplicateIdError(f"duplicate id {sid!r} (first on line {seen[sid]})", path, line, 1)
            seen[sid] = line
            if lab == OOD_TOKEN:
                label = OOD
            elif lab == UNKNOWN_TOKEN:
                label = UNKNOWN
            elif lab in lookup:
                label = lookup[lab]
            else:
                raise UnknownLabelError(f"label {lab!r} is not a class in the header", path, line, 2)
            vals = []
            for j, v in enumerate(row[2:], start=3):
                v = v.strip()
                if not _FLOAT_RE.match(v):
                    raise NonNumericLogitError(f"non-numeric logit {v!r}", path, line, j)
                fv = float(v)
                if not math.isfinite(fv):
                    raise NonNumericLogitError(f"logit {v!r} overflows to infinity", path, line, j)
                vals.append(fv)
            ids.append(sid)
            labels.append(label)
            rows.append(vals)
    logits = np.array(rows, dtype=np.float64).reshape(len(rows), C)
    return Dataset(names, ids, labels, logits)


def _label_token(ds: Dataset, label: int) -> str:
    if label == OOD:
        return OOD_TOKEN
    if label == UNKNOWN:
        return UNKNOWN_TOKEN
    return ds.class_names[label]


def write_logits(path, ds: Dataset):
    for n in ds.class_names:
        if n in RESERVED_LABELS:
            raise PsiOodError(f"class name {n!r} is reserved")
    lines = []
    w = csv.writer(_Lines(lines), lineterminator="\n")
    w.writerow(["id", "label"] + [LOGIT_PREFIX + n for n in ds.class_names])
    for i in range(len(ds)):
        w.writerow([ds.ids[i], _label_token(ds, int(ds.labels[i]))] + [repr(float(v)) for v in ds.logits[i]])
    _write_text(path, "".join(lines))


class _Lines:
    def __init__(self, sink: list):
        self.sink = sink

    def write(self, s: str):
        self.sink.append(s)


# ---------------------------------------------------------------- model JSON

_NUM = {"type": "number"}
_COUNT = {"type": "integer", "minimum": 0}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["format", "format_version", "class_names", "classes"],
    "properties": {
        "format": {"const": "psiood-model"},
        "format_version": {"type": "string"},
        "class_names": {"type": "array", "minItems": 2, "items": {"type": "string", "minLength": 1}},
        "classes": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["name", "mu_correct", "sigma_correct", "mu_wrong", "sigma_wrong",
                             "count_correct", "count_wrong"],
                "properties": {
                    "name": {"type": "string"},
                    "mu_correct": _NUM,
                    "sigma_correct": {"type": "number", "exclusiveMinimum": 0},
                    "mu_wrong": _NUM,
                    "sigma_wrong": {"type": "number", "exclusiveMinimum": 0},
                    "count_correct": _COUNT,
                    "count_wrong": _COUNT,
                },
                "additionalProperties": False,
            },
        },
        "psi_threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "metadata": {"type": "object"},
    },
    "additionalProperties": False,
}


def model_to_dict(model: DetectorModel) -> dict:
    doc = {
        "format": "psiood-model",
        "format_version": FORMAT_VERSION,
        "class_names": list(model.class_names),
        "classes": [
            {
                "name": model.class_names[k],
                "mu_correct": sf.correct.mean,
                "sigma_correct": sf.correct.std,
                "mu_wrong": sf.wrong.mean,
                "sigma_wrong": sf.wrong.std,
                "count_correct": sf.correct.count,
                "count_wrong": sf.wrong.count,
            }
            for k, sf in enumerate(model.score_functions)
        ],
    }
    if model.psi_threshold is not None:
        doc["psi_threshold"] = model.psi_threshold
    doc["metadata"] = dict(model.metadata)
    return doc


def model_from_dict(doc: dict, path=None) -> DetectorModel:
    _check_version(doc, path, "psiood-model")
    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise SchemaViolationError(f"{where}: {e.message}", path) from None
    names = doc["class_names"]
    classes = doc["classes"]
    if len(classes) != len(names):
        raise SchemaViolationError("one 'classes' entry per class name is required", path)
    sfs = []
    for k, c in enumerate(classes):
        if c["name"] != names[k]:
            raise SchemaViolationError(f"classes/{k}: name {c['name']!r} does not match class_names", path)
        try:
            sfs.append(
                ClassScoreFunction(
                    k,
                    GaussianStats(float(c["mu_correct"]), float(c["sigma_correct"]), c["count_correct"]),
                    GaussianStats(float(c["mu_wrong"]), float(c["sigma_wrong"]), c["count_wrong"]),
                )
            )
        except PsiOodError as e:
            raise SchemaViolationError(f"classes/{k}: {e}", path) from None
    t = doc.get("psi_threshold")
    try:
        return DetectorModel(tuple(names), tuple(sfs), None if t is None else float(t), dict(doc.get("metadata", {})))
    except PsiOodError as e:
        raise SchemaViolationError(str(e), path) from None


def write_model(path, model: DetectorModel):
    _write_text(path, dumps(model_to_dict(model)))


def read_model(path) -> DetectorModel:
    return model_from_dict(_read_json(path), path)


# ---------------------------------------------------------------- decisions CSV

DECISION_HEADER = ["id", "is_ood", "predicted_class", "raw_score", "code", "subtype"]


def write_decisions(path, decisions, class_names):
    lines = []
    w = csv.writer(_Lines(lines), lineterminator="\n")
    w.writerow(DECISION_HEADER)
    for d in decisions:
        v = d.verdict
        w.writerow([
            d.sample_id,
            "1" if d.is_ood else "0",
            "" if d.predicted_class is None else class_names[d.predicted_class],
            repr(float(d.raw_score)),
            "" if v is None else v.code.value,
            "" if v is None else v.subtype.value,
        ])
    _write_text(path, "".join(lines))


def read_decisions(path, class_names) -> list:
    path = Path(path)
    lookup = {n: k for k, n in enumerate(class_names)}
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != DECISION_HEADER:
            raise HeaderMismatchError(f"decision file header must be {','.join(DECISION_HEADER)}", path, 1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(DECISION_HEADER):
                raise FormatError(f"expected {len(DECISION_HEADER)} fields, got {len(row)}", path, line)
            sid, ood, pred, raw, code, sub = row
            if ood not in ("0", "1"):
                raise FormatError(f"is_ood must be 0 or 1, got {ood!r}", path, line, 2)
            if pred and pred not in lookup:
                raise UnknownLabelError(f"predicted class {pred!r} not in manifest", path, line, 3)
            if not _FLOAT_RE.match(raw.strip()):
                raise NonNumericLogitError(f"non-numeric raw_score {raw!r}", path, line, 4)
            try:
                verdict = None
                if code or sub:
                    verdict = Verdict(Code(code), Subtype(sub), lookup[pred] if pred else None)
                out.append(DetectorDecision(sid, ood == "1", lookup[pred] if pred else None, float(raw), verdict))
            except (ValueError, PsiOodError) as e:
                raise FormatError(str(e), path, line) from None
    return out


# ---------------------------------------------------------------- reports

def _rate(num: int, den: int) -> dict:
    fr = Fraction(num, den)
    return {"value": float(fr), "display": str(round3(fr)), "numerator": fr.numerator, "denominator": fr.denominator}


def _header(kind: str) -> dict:
    return {"format": "psiood-report", "format_version": FORMAT_VERSION, "kind": kind}


def eval_report_to_dict(r: EvalReport) -> dict:
    doc = _header("evaluation")
    cm = r.confusion
    doc.update({
        "class_names": list(r.class_names),
        "counts": {"n_T": r.n_T, "N_T": r.N_T, "n_OOD": r.n_OOD, "N_OOD": r.N_OOD},
        "classification_accuracy": _rate(r.n_T, r.N_T),
        "ood_detection_rate": _rate(r.n_OOD, r.N_OOD),
        "weighted_accuracy": _rate(
            r.n_T * r.N_OOD + r.n_OOD * r.N_T, 2 * r.N_T * r.N_OOD
        ),
        "confusion": {
            "labels": list(r.class_names) + ["OOD"],
            "matrix": cm.tolist(),
            "row_totals": cm.sum(axis=1).tolist(),
            "column_totals": cm.sum(axis=0).tolist(),
            "total": int(cm.sum()),
        },
    })
    return doc


def _sweep_row(row: SweepRow) -> dict:
    r = row.report
    return {
        "threshold": row.threshold,
        "n_T": r.n_T,
        "N_T": r.N_T,
        "n_OOD": r.n_OOD,
        "N_OOD": r.N_OOD,
        "classification_accuracy": r.classification_accuracy,
        "ood_detection_rate": r.ood_detection_rate,
        "weighted_accuracy": r.weighted_accuracy,
        "display": {
            "classification_accuracy": str(round3(Fraction(r.n_T, r.N_T))),
            "ood_detection_rate": str(round3(Fraction(r.n_OOD, r.N_OOD))),
            "weighted_accuracy": str(round3(Fraction(r.n_T * r.N_OOD + r.n_OOD * r.N_T, 2 * r.N_T * r.N_OOD))),
        },
    }


def sweep_to_dict(rows, detector: str = "psi", best: SweepRow | None = None, metric: str | None = None) -> dict:
    doc = _header("sweep")
    doc["detector"] = detector
    doc["rows"] = [_sweep_row(r) for r in rows]
    if best is not None:
        doc["best"] = {"metric": metric, **_sweep_row(best)}
    return doc


def calibration_to_dict(c: CalibrationResult) -> dict:
    doc = _header("calibration")
    doc.update({
        "detector": c.detector,
        "chosen_threshold": c.chosen_threshold,
        "coverage_target": c.coverage_target,
        "achieved_coverage": c.achieved_coverage,
        "misclassified_count": c.misclassified_count,
        "flagged_count": c.flagged_count,
    })
    return doc


def distribution_to_dict(rep: DistributionReport) -> dict:
    doc = _header("distribution")
    classes = []
    for c in rep.classes:
        splits = {}
        for name, h in c.splits.items():
            d = {"edges": h.edges, "correct": h.correct, "wrong": h.wrong}
            if h.ood is not None:
                d["ood"] = h.ood
            if h.unlabeled is not None:
                d["unlabeled"] = h.unlabeled
            splits[name] = d
        classes.append({
            "index": c.class_index,
            "name": c.class_name,
            "ps_curve": {"x": c.ps_x, "ps": c.ps_y},
            "splits": splits,
        })
    doc["classes"] = classes
    return doc


def write_report(path, report, **kw):
    """Write an evaluation, calibration, distribution or sweep document.

    A sweep is passed as a list of :class:`SweepRow`; ``detector``, ``best``
    and ``metric`` keywords are forwarded to :func:`sweep_to_dict`.
    """
    if isinstance(report, EvalReport):
        doc = eval_report_to_dict(report)
    elif isinstance(report, CalibrationResult):
        doc = calibration_to_dict(report)
    elif isinstance(report, DistributionReport):
        doc = distribution_to_dict(report)
    elif isinstance(report, (list, tuple)) and all(isinstance(r, SweepRow) for r in report):
        doc = sweep_to_dict(report, **kw)
    else:
        raise TypeError(f"cannot write a report for {type(report).__name__}")
    _write_text(path, dumps(doc))


def read_report(path) -> dict:
    doc = _read_json(path)
    _check_version(doc, path, "psiood-report")
    return doc


def read_calibration(path) -> CalibrationResult:
    doc = read_report(path)
    if doc.get("kind") != "calibration":
        raise SchemaViolationError(f"expected a calibration report, got kind {doc.get('kind')!r}", path)
    try:
        return CalibrationResult(
            float(doc["chosen_threshold"]),
            float(doc["achieved_coverage"]),
            int(doc["misclassified_count"]),
            int(doc["flagged_count"]),
            float(doc["coverage_target"]),
            str(doc["detector"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaViolationError(f"malformed calibration report: {e}", path) from None


# ---------------------------------------------------------------- synth spec

def read_synth_spec(path) -> SynthSpec:
    return SynthSpec.from_dict(_read_json(path))


def write_synth_spec(path, spec: SynthSpec):
    _write_text(path, dumps(spec.to_dict()))
