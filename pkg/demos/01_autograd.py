# Reverse-mode autodiff on column batches
#
# Everything in dforge is built from a small tensor type that records the
# operations applied to it. Calling backward() on a scalar walks that record
# in reverse and leaves a .grad array on every leaf that asked for one.
#
# Run: python3 demos/01_autograd.py

import numpy as np

from dforge.tensor import Tensor, gelu, l2_normalize_columns, matmul, softmax_cross_entropy

rng = np.random.default_rng(0)

# ## A two-layer classifier by hand
#
# Inputs are columns: a batch of 5 samples with 3 features is a 3x5 array.
W1 = Tensor(rng.normal(size=(4, 3)) * 0.5, requires_grad=True)
W2 = Tensor(rng.normal(size=(2, 4)) * 0.5, requires_grad=True)
x = Tensor(rng.normal(size=(3, 5)))
labels = np.array([0, 1, 1, 0, 1])

loss = softmax_cross_entropy(matmul(W2, gelu(matmul(W1, x))), labels)
loss.backward()
print(f"loss = {loss.item():.6f}")
print("dL/dW2 =\n", np.round(W2.grad, 5))

# ## Checking against finite differences
#
# Central differences with h = 1e-5 should agree with the analytic gradient
# to roughly 1e-9 on a smooth graph like this one.


def numeric(param, h=1e-5):
    grad = np.zeros_like(param.data)
    for i in np.ndindex(param.shape):
        old = param.data[i]
        param.data[i] = old + h
        up = softmax_cross_entropy(matmul(W2, gelu(matmul(W1, x))), labels).item()
        param.data[i] = old - h
        down = softmax_cross_entropy(matmul(W2, gelu(matmul(W1, x))), labels).item()
        param.data[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


for name, p in (("W1", W1), ("W2", W2)):
    num = numeric(p)
    err = np.linalg.norm(num - p.grad) / np.linalg.norm(num)
    print(f"{name}: relative error vs finite differences {err:.2e}")

# ## Unit-normalising columns
#
# The alignment losses compare directions, so columns get scaled to unit
# length. The gradient of a normalised column is orthogonal to the column
# itself: scaling the input does not change the output.
v = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
(l2_normalize_columns(v) * Tensor(rng.normal(size=(3, 2)))).sum().backward()
print("column . grad (should be ~0):", np.round((v.data * v.grad).sum(axis=0), 12))
