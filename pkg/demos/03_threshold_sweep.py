"""
Sweeping the interpreter threshold
==================================

Classification accuracy falls and the OOD detection rate rises as the
threshold approaches 1. Their mean peaks somewhere in the middle of the grid.
"""

import math

from psiood import SynthSpec, fit_model, generate, neglog_grid, select_best, threshold_sweep

spec = SynthSpec.symmetric(4, counts={"train": 800, "test": 500, "ood": 800}, seed=3)
splits = generate(spec)
model = fit_model(splits["train"])

# thresholds 1 - 10^-x for x = 0.5, 1.0, ..., 13
rows = threshold_sweep(model, splits["test"], splits["ood"], neglog_grid(0.5, 13.0, 0.5))
for r in rows:
    x = -math.log10(1 - r.threshold)
    bar = "#" * int(round(40 * r.weighted_accuracy))
    print(f"t = 1 - 10^-{x:4.1f}  class {r.classification_accuracy:.3f}  ood {r.ood_detection_rate:.3f}  {bar}")

best = select_best(rows, "weighted_accuracy")
print(f"best weighted accuracy {best.weighted_accuracy:.3f} at t = {best.threshold!r}")
