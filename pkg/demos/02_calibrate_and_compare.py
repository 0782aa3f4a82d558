"""
Calibration and a three-way detector comparison
================================================

Thresholds are chosen from validation misclassifications only, then the
probability-score detector is compared with the max-softmax and energy
baselines on test plus OOD data.
"""

import numpy as np

from psiood import (
    BaselineConfig,
    CalibrationSpec,
    Dataset,
    SynthSpec,
    calibrate_baseline_on,
    calibrate_psi,
    energy_detect_batch,
    evaluate,
    fit_model,
    generate,
    max_softmax_detect_batch,
    psi_detect_batch,
)

spec = SynthSpec.symmetric(
    5, own=(5.0, 1.0), cross=(0.0, 1.0),
    counts={"train": 1000, "validation": 5000, "test": 1000, "ood": 1000}, seed=0,
)
splits = generate(spec)
model = fit_model(splits["train"])

# flag at least 75% of the misclassified validation samples
cal = CalibrationSpec(0.75)
psi_result, model = calibrate_psi(model, splits["validation"], cal)
msp_result = calibrate_baseline_on("MaxSoftmax", splits["validation"], cal)
energy_result = calibrate_baseline_on("Energy", splits["validation"], cal)
print(f"{psi_result.misclassified_count} misclassified validation samples")

# one truth set holding both ID and OOD samples
test, ood = splits["test"], splits["ood"]
X = np.vstack([test.logits, ood.logits])
ids = list(test.ids) + list(ood.ids)
truth = Dataset(test.class_names, ids, np.concatenate([test.labels, ood.labels]), X)

runs = {
    "psi": (psi_result, psi_detect_batch(model, X, ids)),
    "max-softmax": (msp_result, max_softmax_detect_batch(BaselineConfig("MaxSoftmax", msp_result.chosen_threshold), X, ids)),
    "energy": (energy_result, energy_detect_batch(BaselineConfig("Energy", energy_result.chosen_threshold), X, ids)),
}
print(f"{'method':12s} {'threshold':>20s} {'weighted':>9s} {'class.':>7s} {'OOD':>7s}")
for name, (res, decisions) in runs.items():
    r = evaluate(decisions, truth)
    print(f"{name:12s} {res.chosen_threshold:20.12g} {r.weighted_accuracy:9.3f} "
          f"{r.classification_accuracy:7.3f} {r.ood_detection_rate:7.3f}")
