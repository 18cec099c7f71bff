# Why an ensemble of linear projectors is pointless
#
# A projector maps student features (d rows) to teacher space (m rows)
# through bias-free layers, activation after each layer. Averaging several
# of them only adds capacity when the activation is nonlinear: without one,
# the mean of q linear maps is itself a single linear map.
#
# Run: python3 demos/02_projector_ensembles.py

import numpy as np

from dforge import projector as pj
from dforge.diagnostics import projector_diversity
from dforge.projector import Projector, ProjectorSpec
from dforge.tensor import Tensor

rng = np.random.default_rng(0)
S = rng.normal(size=(6, 32))  # 32 student feature columns, d = 6

for act in ("none", "relu", "gelu"):
    e = pj.init_ensemble(ProjectorSpec(6, 8, activation=act), q=3, seed=7)
    mean_w = np.mean([m.weights[0].data for m in e.members], axis=0)
    collapsed = pj.project(Projector(e.spec, [Tensor(mean_w)]), S).data
    gap = np.abs(pj.ensemble_forward(e, S).data - collapsed).max()
    print(f"activation {act:>4}: max |ensemble - single averaged projector| = {gap:.3e}")

# ## Members start apart
#
# Each member draws its weights from its own random stream, so the pairwise
# weight distances are all positive at initialisation. During distillation
# these distances typically shrink as the members agree on a mapping.
e = pj.init_ensemble(ProjectorSpec(6, 8), q=4, seed=7)
print("pairwise distances (0,1) (0,2) (0,3) (1,2) (1,3) (2,3):")
print(np.round(projector_diversity(e), 4))

# ## Deeper and wider variants
#
# Depth stacks layers, width multiplies the hidden size by 1, 2 or 3.
for depth, width in ((1, 1), (2, 1), (2, 3), (4, 2)):
    spec = ProjectorSpec(6, 8, depth, width)
    print(f"depth {depth} width {width}: weight shapes {spec.weight_shapes()}")
