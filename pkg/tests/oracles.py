"""Independent reference computations used by the tests."""

import math

import numpy as np


def finite_difference_grads(net, x, upstream, h=1e-5):
    """Central differences of sum(net(x) * upstream) w.r.t. every parameter."""
    out = []
    for p in net.params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            hi = float(np.sum(net(x) * upstream))
            p[idx] = old - h
            lo = float(np.sum(net(x) * upstream))
            p[idx] = old
            g[idx] = (hi - lo) / (2 * h)
        out.append(g)
    return out


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        err = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(err.max()))
    return worst


def gradient_check(num_nets=100, seed=0):
    """Worst relative error between backprop and central differences over random nets."""
    from smbs.nn import Mlp

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_nets):
        sizes = [int(rng.integers(1, 6))] + [int(rng.integers(2, 9)) for _ in range(int(rng.integers(0, 3)))] + [int(rng.integers(1, 4))]
        net = Mlp(sizes, rng)
        for b in net.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        x = rng.normal(size=(int(rng.integers(1, 4)), sizes[0]))
        up = rng.normal(size=(len(x), sizes[-1]))
        worst = max(worst, max_relative_error(net.backward(x, up), finite_difference_grads(net, x, up)))
    return worst


def brute_mean_std(samples):
    """Per-column mean and (n-1) std with plain Python loops; std 0 for one row."""
    rows = [list(map(float, r)) for r in samples]
    m = len(rows)
    means, stds = [], []
    for j in range(len(rows[0])):
        col = [r[j] for r in rows]
        mu = math.fsum(col) / m
        means.append(mu)
        stds.append(math.sqrt(math.fsum((c - mu) ** 2 for c in col) / (m - 1)) if m > 1 else 0.0)
    return means, stds


def brute_argmax(values):
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def binomial_se(p, n):
    return math.sqrt(p * (1 - p) / n)
