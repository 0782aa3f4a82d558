"""
Per-class score functions and the verdict table
===============================================

Fit correct/wrong Gaussians on synthetic training logits, look at the score
curve of one neuron, then read a few hand-made score vectors through the
interpreter.
"""

import numpy as np

from psiood import SynthSpec, fit_model, generate, interpret, ps_vector

# three classes whose own logit sits 5 sigma above the others
spec = SynthSpec.symmetric(3, own=(5.0, 1.0), cross=(0.0, 1.0), counts={"train": 500}, seed=1)
train = generate(spec)["train"]
model = fit_model(train)

for k, sf in enumerate(model.score_functions):
    print(f"{model.class_names[k]}: correct N({sf.correct.mean:.2f}, {sf.correct.std:.2f})"
          f"  wrong N({sf.wrong.mean:.2f}, {sf.wrong.std:.2f})")

# the score is -1 below the wrong mean, +1 above the correct mean and
# smooth in between
sf = model.score_functions[0]
for x in np.linspace(sf.wrong.mean - 1, sf.correct.mean + 1, 9):
    print(f"  x = {x:6.2f}  ps = {sf(x):+.6f}")

# a whole logit vector becomes one score per class
x = np.array([4.1, 0.3, -0.5])
print("scores:", np.round(ps_vector(model, x), 4))

t = 0.999
cases = {
    "one strong class": [0.9999, -0.999, -0.999],
    "strong plus weak support": [0.9999, 0.5, -0.9],
    "two strong classes": [0.9999, 0.9999, -0.9],
    "only weak support": [0.5, -0.2, -0.9],
    "nothing positive": [-0.2, -0.9, -0.9],
}
for name, ps in cases.items():
    v = interpret(ps, t)
    print(f"{name:26s} -> {v.code.value:6s} {v.subtype.value:18s} class={v.predicted_class}")
