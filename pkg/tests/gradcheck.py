"""Central finite-difference oracle shared by the gradient tests."""

import numpy as np

H = 1e-5


def numeric_grad(f, arr, h=H):
    """d f() / d arr by central differences, perturbing ``arr`` in place."""
    grad = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def rel_err(a, b):
    """Norm-wise relative error ``|a - b| / max(|a|, |b|)``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


def check_leaves(loss_fn, leaves, h=H):
    """Worst relative error between autograd and finite differences over
    every leaf tensor. ``loss_fn()`` must rebuild the graph from scratch."""
    for leaf in leaves:
        leaf.grad = None
    loss_fn().backward()
    analytic = [leaf.grad.copy() for leaf in leaves]
    worst = 0.0
    for leaf, g in zip(leaves, analytic):
        num = numeric_grad(lambda: loss_fn().item(), leaf.data, h)
        worst = max(worst, rel_err(g, num))
    return worst
