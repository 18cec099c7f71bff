"""Teacher and student networks that expose their penultimate-layer features.

A network is an optional small conv stem, a stack of fully connected
hidden layers and a linear classifier. ``forward`` returns both the
features feeding the classifier and the logits, from one pass.

Teachers typically set ``pool=4``: the last hidden layer is ``4 * feature_dim``
wide, activated, then mean-pooled in contiguous groups of four. That keeps
teacher features dense and positive the way globally average-pooled CNN
features are.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import serialization
from .errors import DimensionError, FormatError, SpecError
from .rng import NET, make_rng
from .tensor import (
    Tensor,
    activation,
    add_bias,
    as_tensor,
    avg_pool2d,
    conv2d,
    matmul,
    mean_pool_rows,
)

MAGIC = b"DFNT1"


@dataclass(frozen=True)
class ConvStem:
    image_shape: tuple  # (channels, height, width)
    channels: tuple = (4,)
    kernels: tuple = (3,)
    pool: int = 2

    def stage_shapes(self):
        """Per stage: (input shape, conv output shape, pooled output shape)."""
        shapes = []
        c, h, w = self.image_shape
        for cout, k in zip(self.channels, self.kernels):
            ho, wo = h - k + 1, w - k + 1
            if ho < 1 or wo < 1:
                raise SpecError(f"kernel {k} does not fit a {h}x{w} image")
            conv_shape = (cout, ho, wo)
            if self.pool > 1:
                ho, wo = ho // self.pool, wo // self.pool
                if ho < 1 or wo < 1:
                    raise SpecError(f"pool {self.pool} collapses a {conv_shape} map")
            shapes.append(((c, h, w), conv_shape, (cout, ho, wo)))
            c, h, w = cout, ho, wo
        return shapes

    @property
    def out_dim(self):
        c, h, w = self.stage_shapes()[-1][2] if self.channels else self.image_shape
        return c * h * w


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden: tuple
    feature_dim: int
    classes: int
    activation: str = "relu"
    pool: int = 1
    conv: ConvStem = None

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if isinstance(self.conv, dict):
            stem = {k: tuple(v) if isinstance(v, list) else v for k, v in self.conv.items()}
            object.__setattr__(self, "conv", ConvStem(**stem))
        self.validate()

    def validate(self):
        if self.input_dim < 1:
            raise SpecError(f"input_dim must be positive, got {self.input_dim}")
        if self.feature_dim < 1:
            raise SpecError(f"feature_dim must be positive, got {self.feature_dim}")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise SpecError(f"hidden widths must be a non-empty list of positive ints, got {list(self.hidden)}")
        if self.hidden[-1] != self.feature_dim:
            raise SpecError(
                f"last hidden width {self.hidden[-1]} must equal feature_dim {self.feature_dim}"
            )
        if self.classes < 1:
            raise SpecError(f"classes must be positive, got {self.classes}")
        if self.pool < 1:
            raise SpecError(f"pool must be >= 1, got {self.pool}")
        if self.activation not in ("relu", "gelu"):
            raise SpecError(f"network activation must be relu or gelu, got {self.activation!r}")
        if self.conv is not None:
            c, h, w = self.conv.image_shape
            if c * h * w != self.input_dim:
                raise SpecError(f"conv image {self.conv.image_shape} does not flatten to {self.input_dim}")
            if len(self.conv.channels) != len(self.conv.kernels):
                raise SpecError("conv channels and kernels must have equal length")
            if any(ch < 1 for ch in self.conv.channels) or any(k < 1 for k in self.conv.kernels):
                raise SpecError("conv channels and kernels must be positive")
            self.conv.stage_shapes()

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        if self.conv is not None:
            d["conv"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["conv"].items()}
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def param_shapes(self):
        shapes = []
        width = self.input_dim
        if self.conv is not None:
            cin = self.conv.image_shape[0]
            for cout, k in zip(self.conv.channels, self.conv.kernels):
                shapes += [(cout, cin, k, k), (cout, 1)]
                cin = cout
            width = self.conv.out_dim
        for i, h in enumerate(self.hidden):
            out = h * self.pool if i == len(self.hidden) - 1 else h
            shapes += [(out, width), (out, 1)]
            width = out
        shapes += [(self.classes, self.feature_dim), (self.classes, 1)]
        return shapes


def _fan_in(weight_shape):
    return int(np.prod(weight_shape[1:]))


@dataclass
class Network:
    spec: NetworkSpec
    params: list = field(default_factory=list)

    def __post_init__(self):
        expected = self.spec.param_shapes()
        got = [p.shape for p in self.params]
        if got != [tuple(s) for s in expected]:
            raise DimensionError(f"parameter shapes {got} do not match spec {expected}")

    def forward(self, x):
        return forward(self, x)

    def __call__(self, x):
        return forward(self, x)

    def requires_grad_(self, flag=True):
        for p in self.params:
            p.requires_grad = flag
        return self

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def arrays(self):
        return [p.data for p in self.params]


def build(spec, seed):
    """Fresh network with fan-in uniform init, bound ``sqrt(1 / fan_in)``."""
    if not isinstance(spec, NetworkSpec):
        spec = NetworkSpec.from_dict(spec)
    rng = make_rng(seed, NET)
    shapes = spec.param_shapes()
    params = []
    # each (weight, bias) pair shares the weight's fan-in
    for wshape, bshape in zip(shapes[::2], shapes[1::2]):
        bound = np.sqrt(1.0 / _fan_in(wshape))
        params.append(Tensor(rng.uniform(-bound, bound, size=wshape), requires_grad=True))
        params.append(Tensor(rng.uniform(-bound, bound, size=bshape), requires_grad=True))
    return Network(spec, params)


def forward(net, x):
    """Return ``(features, logits)`` for a column batch ``x`` (input_dim x b)."""
    spec = net.spec
    x = as_tensor(x)
    if x.data.ndim != 2 or x.shape[0] != spec.input_dim:
        raise DimensionError(f"input of shape {x.shape} does not match input_dim {spec.input_dim}")
    act = activation(spec.activation)
    params = iter(net.params)
    h = x
    if spec.conv is not None:
        for in_shape, conv_shape, _ in spec.conv.stage_shapes():
            h = act(conv2d(h, next(params), next(params), in_shape))
            if spec.conv.pool > 1:
                h = avg_pool2d(h, conv_shape, spec.conv.pool)
    for _ in spec.hidden:
        w, b = next(params), next(params)
        h = act(add_bias(matmul(w, h), b))
    if spec.pool > 1:
        h = mean_pool_rows(h, spec.pool)
    features = h
    wc, bc = next(params), next(params)
    logits = add_bias(matmul(wc, features), bc)
    return features, logits


def predict(net, x):
    _, logits = forward(net, x)
    return logits.data.argmax(axis=0)


def to_bytes(net):
    return serialization.encode(MAGIC, {"kind": "network", "spec": net.spec.to_dict()}, net.arrays())


def from_bytes(buf):
    descriptor, arrays = serialization.decode(MAGIC, buf)
    try:
        spec = NetworkSpec.from_dict(descriptor["spec"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"checkpoint descriptor is missing a valid spec: {exc}") from None
    try:
        return Network(spec, [Tensor(a, requires_grad=True) for a in arrays])
    except DimensionError as exc:
        raise FormatError(str(exc)) from None


def save(net, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(net))


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
