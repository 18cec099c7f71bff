"""Student-to-teacher feature projectors and their ensemble average.

A projector maps ``d x b`` student features to ``m x b`` through bias-free
linear layers, applying the activation after every layer including the
last. An ensemble of ``q`` independently initialised projectors averages
the member outputs. Projectors exist only during distillation; the
distilled student never carries them.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import serialization
from .errors import ConfigError, DimensionError, FormatError, SpecError
from .rng import PROJECTOR, make_rng
from .tensor import Tensor, activation, as_tensor, matmul, mul

MAGIC = b"DFPJ1"


@dataclass(frozen=True)
class ProjectorSpec:
    in_dim: int
    out_dim: int
    depth: int = 1
    width: int = 1
    activation: str = "relu"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise SpecError(f"projector dims must be positive, got {self.in_dim}->{self.out_dim}")
        if self.depth < 1:
            raise SpecError(f"projector depth must be >= 1, got {self.depth}")
        if self.width not in (1, 2, 3):
            raise SpecError(f"hidden-width multiplier must be 1, 2 or 3, got {self.width}")
        if self.activation not in ("relu", "gelu", "none"):
            raise SpecError(f"projector activation must be relu, gelu or none, got {self.activation!r}")

    def weight_shapes(self):
        if self.depth == 1:
            return [(self.out_dim, self.in_dim)]
        hid = self.width * self.out_dim
        shapes = [(hid, self.in_dim)]
        shapes += [(hid, hid)] * (self.depth - 2)
        shapes.append((self.out_dim, hid))
        return shapes


@dataclass
class Projector:
    spec: ProjectorSpec
    weights: list = field(default_factory=list)

    def __post_init__(self):
        got = [w.shape for w in self.weights]
        if got != self.spec.weight_shapes():
            raise DimensionError(f"projector weights {got} do not match {self.spec.weight_shapes()}")

    def __call__(self, s):
        return project(self, s)


@dataclass
class ProjectorEnsemble:
    spec: ProjectorSpec
    members: list

    def __post_init__(self):
        if len(self.members) < 1:
            raise ConfigError("an ensemble needs at least one projector")

    @property
    def q(self):
        return len(self.members)

    @property
    def params(self):
        return [w for p in self.members for w in p.weights]

    def __call__(self, s):
        return ensemble_forward(self, s)

    def zero_grad(self):
        for w in self.params:
            w.grad = None


def init_projector(spec, seed, index=0):
    """One projector drawn from the stream ``(seed, index)``."""
    rng = make_rng(seed, PROJECTOR, index)
    weights = []
    for shape in spec.weight_shapes():
        bound = np.sqrt(1.0 / shape[1])
        weights.append(Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True))
    return Projector(spec, weights)


def init_ensemble(spec, q, seed):
    if int(q) != q or q < 1:
        raise ConfigError(f"number of projectors must be a positive integer, got {q}")
    return ProjectorEnsemble(spec, [init_projector(spec, seed, k) for k in range(int(q))])


def project(p, s):
    s = as_tensor(s)
    if s.data.ndim != 2 or s.shape[0] != p.spec.in_dim:
        raise DimensionError(f"projector expects {p.spec.in_dim} rows, got input {s.shape}")
    act = activation(p.spec.activation)
    h = s
    for w in p.weights:
        h = act(matmul(w, h))
    return h


def ensemble_forward(e, s):
    """Column-wise mean of member outputs, summed in member-index order."""
    total = None
    for member in e.members:
        out = project(member, s)
        total = out if total is None else total + out
    return total if e.q == 1 else mul(total, 1.0 / e.q)


def flat_weights(p):
    return np.concatenate([w.data.ravel() for w in p.weights])


def to_bytes(e):
    descriptor = {"kind": "projector_ensemble", "spec": asdict(e.spec), "q": e.q}
    return serialization.encode(MAGIC, descriptor, [w.data for w in e.params])


def from_bytes(buf):
    descriptor, arrays = serialization.decode(MAGIC, buf)
    try:
        spec = ProjectorSpec(**descriptor["spec"])
        q = int(descriptor["q"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"projector dump descriptor is invalid: {exc}") from None
    per = len(spec.weight_shapes())
    if len(arrays) != per * q:
        raise FormatError(f"expected {per * q} tensors for q={q}, found {len(arrays)}")
    members = []
    try:
        for k in range(q):
            chunk = arrays[k * per:(k + 1) * per]
            members.append(Projector(spec, [Tensor(a, requires_grad=True) for a in chunk]))
    except DimensionError as exc:
        raise FormatError(str(exc)) from None
    return ProjectorEnsemble(spec, members)


def save(e, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(e))


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
