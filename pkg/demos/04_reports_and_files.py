"""
Files, reports and the confusion matrix
=======================================

Everything the command line tool reads and writes is available from Python:
logit CSV files, model documents, decision files and JSON reports.
"""

import tempfile
from pathlib import Path

import numpy as np

from psiood import (
    SynthSpec,
    calibrate_psi,
    distribution_report,
    evaluate,
    fit_model,
    generate,
    io,
    psi_detect_batch,
)
from psiood.core import Dataset

out = Path(tempfile.mkdtemp(prefix="psiood-demo-"))
spec = SynthSpec.symmetric(3, counts={"train": 400, "validation": 2000, "test": 200, "ood": 300}, seed=11)
splits = generate(spec)
for name, ds in splits.items():
    io.write_logits(out / f"{name}.csv", ds)
print("wrote", sorted(p.name for p in out.iterdir()))

# reading back gives identical floats
train = io.read_logits(out / "train.csv")
assert np.array_equal(train.logits, splits["train"].logits)

model = fit_model(train)
_, model = calibrate_psi(model, io.read_logits(out / "validation.csv"))
io.write_model(out / "model.json", model)
print((out / "model.json").read_text()[:400], "...")

test, ood = io.read_logits(out / "test.csv"), io.read_logits(out / "ood.csv")
X = np.vstack([test.logits, ood.logits])
ids = list(test.ids) + list(ood.ids)
decisions = psi_detect_batch(model, X, ids)
io.write_decisions(out / "decisions.csv", decisions, model.class_names)

truth = Dataset(test.class_names, ids, np.concatenate([test.labels, ood.labels]), X)
report = evaluate(io.read_decisions(out / "decisions.csv", model.class_names), truth)
labels = list(model.class_names) + ["OOD"]
print(" " * 8 + "".join(f"{c:>8s}" for c in labels))
for name, row in zip(labels, report.confusion):
    print(f"{name:>8s}" + "".join(f"{v:8d}" for v in row))
io.write_report(out / "eval.json", report)

# histogram and score-curve data for plotting elsewhere
io.write_report(out / "distribution.json", distribution_report(model, {"test": test, "ood": ood}))
print("reports in", out)
