# IDX images, a tiny conv stem and bit-exact checkpoints
#
# IDX is the big-endian format MNIST ships in. This demo writes a small
# synthetic set of 8x8 "bar" images to IDX, reads them back, trains a conv
# teacher and an MLP student on them, and round-trips every artefact.
#
# Run: python3 demos/06_idx_and_checkpoints.py

import tempfile
from pathlib import Path

import numpy as np

from dforge import data, nets
from dforge import projector as pj
from dforge.nets import ConvStem, NetworkSpec
from dforge.trainer import DistillConfig, accuracy, pretrain_teacher, run_distillation

rng = np.random.default_rng(0)


def bars(n):
    """Class 0: a horizontal bar, class 1: a vertical bar, plus noise."""
    labels = rng.integers(0, 2, size=n)
    imgs = rng.integers(0, 60, size=(n, 8, 8))
    for i, k in enumerate(labels):
        pos = rng.integers(1, 7)
        if k == 0:
            imgs[i, pos, :] = 255
        else:
            imgs[i, :, pos] = 255
    return imgs.astype(np.uint8), labels


tmp = Path(tempfile.mkdtemp())
for split, n in (("train", 400), ("test", 100)):
    data.write_idx(tmp / f"{split}-images.idx", tmp / f"{split}-labels.idx", *bars(n))
train = data.load_idx(tmp / "train-images.idx", tmp / "train-labels.idx", "train")
test = data.load_idx(tmp / "test-images.idx", tmp / "test-labels.idx", "test")
print(f"loaded {len(train)} train images, pixel range [{train.inputs.min()}, {train.inputs.max()}]")

# ## A conv teacher
stem = ConvStem((1, 8, 8), channels=(4,), kernels=(3,), pool=2)
teacher = pretrain_teacher(NetworkSpec(64, (16,), 16, 2, pool=2, conv=stem), (train, test),
                           DistillConfig(epochs=10, decay_epochs=(), seed=0))
print(f"teacher accuracy {accuracy(teacher, test):.3f}")

# ## Distil and save
result = run_distillation(teacher, NetworkSpec(64, (8,), 8, 2), (train, test),
                          DistillConfig(epochs=10, decay_epochs=(), seed=0, q=3))
nets.save(result.student, tmp / "student.dfnt")
pj.save(result.projectors, tmp / "projectors.dfpj")
back = nets.load(tmp / "student.dfnt")
same = all(a.data.tobytes() == b.data.tobytes() for a, b in zip(result.student.params, back.params))
print(f"student accuracy {accuracy(back, test):.3f}; reloaded bit-identical: {same}")
print(f"projector dump holds q={pj.load(tmp / 'projectors.dfpj').q} members")

# ## Malformed input
(tmp / "bad.idx").write_bytes((tmp / "test-images.idx").read_bytes()[:100])
try:
    data.load_idx(tmp / "bad.idx", tmp / "test-labels.idx")
except data.FormatError as exc:
    print("truncated file rejected:", exc)
