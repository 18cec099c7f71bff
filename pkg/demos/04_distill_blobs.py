# Distilling a wide teacher into a narrow student
#
# One seed of the horizontal-ensemble experiment at a size that finishes in
# about half a minute. The data are 10 classes, each a mixture of 8 Gaussian
# blobs in 4 dimensions, so a linear model is not enough and a
# 32-unit student has something to learn from the teacher.
#
# Run: python3 demos/04_distill_blobs.py [seed]

import sys
import time

from dforge.data import make_blobs, standardize
from dforge.nets import NetworkSpec
from dforge.trainer import DistillConfig, accuracy, distill, pretrain_teacher

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
train, test = standardize(*make_blobs(10, 300, 4, 1.0, seed, separation=4.0, modes_per_class=8))
print(f"{len(train)} train / {len(test)} test samples, {train.input_dim} inputs")

# ## Teacher
#
# Two hidden layers; the last is 128 wide and mean-pooled in groups of four
# down to 32 feature dimensions, so teacher features are dense and positive.
teacher_spec = NetworkSpec(4, (256, 32), 32, 10, pool=4)
teacher = pretrain_teacher(teacher_spec, (train, test), DistillConfig(epochs=30, decay_epochs=(), seed=seed))
print(f"teacher test accuracy {accuracy(teacher, test):.4f}")

# ## Students
#
# Same 32-dim feature layer as the teacher, so raw features can be aligned
# directly ("no-projector") as well as through one or three projectors.
student_spec = NetworkSpec(4, (32,), 32, 10)
for mode, q in (("student-only", 3), ("no-projector", 3), ("single", 1), ("ensemble", 3)):
    start = time.perf_counter()
    cfg = DistillConfig(epochs=30, decay_epochs=(15, 22), seed=seed, mode=mode, q=q)
    _, records = distill(teacher, student_spec, (train, test), cfg)
    last = records[-1]
    print(f"{mode:>13}: test acc {last.test_acc:.4f}  M_DA {last.mda:.3f}  M_BC {last.mbc:.3f}"
          f"  ({time.perf_counter() - start:.1f}s)")
