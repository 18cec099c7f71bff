# Direction alignment
#
# The alignment loss ignores feature magnitude: it is one minus the mean
# cosine between projected student columns and teacher columns. The same
# number is half the mean squared distance between the unit-normalised
# columns, which is easy to confirm numerically.
#
# Run: python3 demos/03_alignment_losses.py

import math

import numpy as np

from dforge import projector as pj
from dforge.losses import DistillLossConfig, da_loss, da_loss_l2_form, mda_loss, total_loss
from dforge.projector import ProjectorSpec
from dforge.tensor import Tensor

g = np.array([[1.0, 1.0], [1.0, 0.0]])  # columns (1,1) and (1,0)
t = np.array([[1.0, 0.0], [0.0, 1.0]])  # columns (1,0) and (0,1)
print("45 degrees then 90 degrees:", da_loss(g, t).item(), "expected", (1 - math.sqrt(2) / 2 + 1) / 2)

rng = np.random.default_rng(3)
worst = 0.0
for _ in range(1000):
    a, b = rng.normal(size=(16, 8)), rng.normal(size=(16, 8))
    worst = max(worst, abs(da_loss(a, b).item() - da_loss_l2_form(a, b).item()))
print(f"cosine form vs squared-distance form, worst gap over 1000 batches: {worst:.1e}")
print("scaling the student by 40 changes nothing:", da_loss(40 * g, t).item())

# ## Through an ensemble
#
# The ensemble version projects the student features with every member,
# averages, then applies the same loss. Gradients reach the student
# features and every projector weight; the teacher stays frozen.
S = Tensor(rng.normal(size=(5, 10)), requires_grad=True)
T = np.abs(rng.normal(size=(7, 10)))
e = pj.init_ensemble(ProjectorSpec(5, 7), q=3, seed=1)
loss = mda_loss(e, S, T)
loss.backward()
print(f"ensemble alignment loss {loss.item():.4f}; grad norms: student "
      f"{np.linalg.norm(S.grad):.4f}, member 0 {np.linalg.norm(e.members[0].weights[0].grad):.4f}")

# ## The full objective
#
# Cross-entropy plus alpha times the alignment term (alpha defaults to 25).
logits = Tensor(rng.normal(size=(3, 10)))
labels = rng.integers(0, 3, size=10)
parts = {}
total = total_loss(logits, labels, e, S, T, DistillLossConfig(), parts=parts)
print(f"total {total.item():.4f} = ce {parts['ce']:.4f} + 25 * {parts['align']:.4f}")
