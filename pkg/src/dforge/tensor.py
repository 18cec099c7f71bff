"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op records its parents and a closure mapping the output gradient to
parent gradients. ``Tensor.backward`` sweeps the recorded graph once in
reverse topological order and accumulates into leaf ``.grad`` buffers.

Feature matrices are column-stacked: a batch of ``b`` vectors of width
``m`` is an ``m x b`` tensor. Broadcasting is limited to python scalars
and per-column ``1 x b`` row factors.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import ndtr

from .errors import ContractError, DimensionError

EPS = 1e-12
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, *, _parents=(), _backward=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents = _parents
        self._backward = _backward

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Populate ``.grad`` of every tracked leaf reachable from this scalar.

        Gradients accumulate: calling twice without ``zero_grad`` doubles them.
        """
        if self.size != 1:
            raise ContractError(f"backward() needs a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("backward() called on a tensor that does not track gradients")

        order = _topological(self)
        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg

    # operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor / tensor is not supported; use l2_normalize_columns")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self):
        return mean(self)


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def _result(data, parents, backward, op):
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, _parents=parents, _backward=backward, op=op)
    return Tensor(data, op=op)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _row_factor_grad(g, a_data, shape):
    # reduce a full-shape gradient back to a 1 x b per-column factor
    if shape == g.shape:
        return g * a_data
    return (g * a_data).sum(axis=0, keepdims=True)


def add(a, b):
    if not isinstance(b, Tensor):
        if isinstance(a, Tensor):
            c = float(b)
            return _result(a.data + c, (a,), lambda g: (g,), "add_scalar")
        a, b = b, a
    if not isinstance(a, Tensor):
        c = float(a)
        return _result(b.data + c, (b,), lambda g: (g,), "add_scalar")
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    return _result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b):
    if isinstance(b, Tensor):
        return add(a, mul(b, -1.0))
    return add(a, -float(b))


def mul(a, b):
    """Elementwise product; ``b`` may be a scalar or a ``1 x b`` column factor."""
    if not isinstance(b, Tensor):
        c = float(b)
        return _result(a.data * c, (a,), lambda g: (g * c,), "scale")
    if not isinstance(a, Tensor):
        return mul(b, a)
    if a.shape != b.shape:
        if b.data.ndim == 2 and b.shape[0] == 1 and a.data.ndim == 2 and b.shape[1] == a.shape[1]:
            pass
        elif a.data.ndim == 2 and a.shape[0] == 1 and b.data.ndim == 2 and a.shape[1] == b.shape[1]:
            a, b = b, a
        else:
            raise DimensionError(f"mul: shapes {a.shape} and {b.shape} are incompatible")
    ad, bd = a.data, b.data

    def backward(g):
        return g * bd, _row_factor_grad(g, ad, bd.shape)

    return _result(ad * bd, (a, b), backward, "mul")


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not chain")
    ad, bd = a.data, b.data

    def backward(g):
        return g @ bd.T, ad.T @ g

    return _result(ad @ bd, (a, b), backward, "matmul")


def add_bias(x, bias):
    """``x`` (m x b) plus a per-row bias of shape (m, 1)."""
    if bias.data.ndim != 2 or bias.shape != (x.shape[0], 1):
        raise DimensionError(f"add_bias: bias {bias.shape} does not fit {x.shape}")

    def backward(g):
        return g, g.sum(axis=1, keepdims=True)

    return _result(x.data + bias.data, (x, bias), backward, "add_bias")


def tsum(x, axis=None):
    """Sum of all entries (scalar) or column sums (``axis=0``, shape 1 x b)."""
    if axis is None:
        shape = x.shape
        return _result(np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),), "sum")
    if axis != 0:
        raise ValueError("only axis=None or axis=0 is supported")
    shape = x.shape
    return _result(
        x.data.sum(axis=0, keepdims=True),
        (x,),
        lambda g: (np.broadcast_to(g, shape).copy(),),
        "sum_cols",
    )


def mean(x):
    n = x.size
    return mul(tsum(x), 1.0 / n)


def relu(x):
    mask = x.data > 0
    # np.maximum keeps NaN, so divergence is not masked as a zero activation
    return _result(np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def gelu(x):
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF."""
    xd = x.data
    cdf = ndtr(xd)

    def backward(g):
        return (g * (cdf + xd * np.exp(-0.5 * xd * xd) * _INV_SQRT_2PI),)

    return _result(xd * cdf, (x,), backward, "gelu")


def identity(x):
    return x


ACTIVATIONS = {"relu": relu, "gelu": gelu, "none": identity}


def activation(kind):
    try:
        return ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(ACTIVATIONS)}") from None


def l2_normalize_columns(x, eps=EPS):
    """Divide each column by ``max(norm, eps)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    xd = x.data
    norms = np.sqrt((xd * xd).sum(axis=0, keepdims=True))
    denom = np.maximum(norms, eps)
    y = xd / denom
    active = norms > eps

    def backward(g):
        # quotient rule on the branch where the norm is the divisor
        proj = np.where(active, (y * g).sum(axis=0, keepdims=True), 0.0)
        return ((g - y * proj) / denom,)

    return _result(y, (x,), backward, "l2norm_cols")


def log_softmax(x):
    """Column-wise log-softmax of a ``c x b`` tensor."""
    z = x.data - x.data.max(axis=0, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=0, keepdims=True))
    out = z - lse
    soft = np.exp(out)

    def backward(g):
        return (g - soft * g.sum(axis=0, keepdims=True),)

    return _result(out, (x,), backward, "log_softmax")


def _check_labels(labels, c, b):
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != b:
        raise DimensionError(f"expected {b} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise IndexError("labels must be integral class indices")
        labels = labels.astype(np.int64)
    bad = (labels < 0) | (labels >= c)
    if bad.any():
        raise IndexError(f"label {int(labels[bad][0])} outside [0, {c})")
    return labels


def softmax_cross_entropy(logits, labels):
    """Batch-mean negative log-likelihood of ``labels`` under column softmax."""
    c, b = logits.shape
    labels = _check_labels(labels, c, b)
    cols = np.arange(b)
    z = logits.data - logits.data.max(axis=0, keepdims=True)
    ez = np.exp(z)
    total = ez.sum(axis=0)
    nll = np.log(total) - z[labels, cols]

    def backward(g):
        grad = ez / total
        grad[labels, cols] -= 1.0
        return (grad * (float(g) / b),)

    return _result(np.array(nll.mean()), (logits,), backward, "softmax_xent")


def mean_pool_rows(x, group):
    """Average contiguous groups of ``group`` rows: (m*group) x b -> m x b."""
    rows, b = x.shape
    if group < 1 or rows % group:
        raise DimensionError(f"cannot pool {rows} rows in groups of {group}")
    out = x.data.reshape(rows // group, group, b).mean(axis=1)

    def backward(g):
        return (np.repeat(g / group, group, axis=0),)

    return _result(out, (x,), backward, "mean_pool_rows")


def conv2d(x, weight, bias, image_shape):
    """Valid, stride-1 2D convolution on column-stacked images.

    ``x`` is (C*H*W) x b with each column a row-major (C, H, W) image,
    ``weight`` is (C_out, C, k, k) and ``bias`` is (C_out, 1). Returns the
    (C_out*H'*W') x b output with H' = H - k + 1.
    """
    c, h, w = image_shape
    cout, cin, k, k2 = weight.shape
    if cin != c or k != k2 or x.shape[0] != c * h * w or k > h or k > w:
        raise DimensionError(
            f"conv2d: input {x.shape} as {image_shape} vs kernel {weight.shape}"
        )
    if bias.shape != (cout, 1):
        raise DimensionError(f"conv2d: bias {bias.shape} does not match {cout} channels")
    b = x.shape[1]
    ho, wo = h - k + 1, w - k + 1
    imgs = x.data.T.reshape(b, c, h, w)
    windows = sliding_window_view(imgs, (k, k), axis=(2, 3))
    wd = weight.data
    out = np.einsum("bchwij,ocij->bohw", windows, wd) + bias.data.reshape(1, cout, 1, 1)

    def backward(g):
        g4 = g.T.reshape(b, cout, ho, wo)
        dw = np.einsum("bchwij,bohw->ocij", windows, g4)
        dbias = g4.sum(axis=(0, 2, 3)).reshape(cout, 1)
        dx = np.zeros((b, c, h, w))
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + ho, j:j + wo] += np.einsum("bohw,oc->bchw", g4, wd[:, :, i, j])
        return dx.reshape(b, -1).T, dw, dbias

    return _result(out.reshape(b, -1).T, (x, weight, bias), backward, "conv2d")


def avg_pool2d(x, image_shape, k):
    """Non-overlapping ``k x k`` average pooling; trailing rows/cols that do
    not fill a window are dropped."""
    c, h, w = image_shape
    b = x.shape[1]
    if x.shape[0] != c * h * w:
        raise DimensionError(f"avg_pool2d: input {x.shape} is not {image_shape}")
    hp, wp = h // k, w // k
    if hp == 0 or wp == 0:
        raise DimensionError(f"avg_pool2d: window {k} exceeds image {h}x{w}")
    imgs = x.data.T.reshape(b, c, h, w)[:, :, : hp * k, : wp * k]
    out = imgs.reshape(b, c, hp, k, wp, k).mean(axis=(3, 5))

    def backward(g):
        g4 = g.T.reshape(b, c, hp, 1, wp, 1) / (k * k)
        full = np.zeros((b, c, h, w))
        full[:, :, : hp * k, : wp * k] = np.broadcast_to(g4, (b, c, hp, k, wp, k)).reshape(
            b, c, hp * k, wp * k
        )
        return (full.reshape(b, -1).T,)

    return _result(out.reshape(b, -1).T, (x,), backward, "avg_pool2d")
