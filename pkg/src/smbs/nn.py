"""Dense ReLU networks with hand-written reverse mode, and Adam.

Inputs are batched as ``(N, in)``; a 1-D input is treated as a batch of one
and returned 1-D.  Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Mlp:
    """Fully connected net: ReLU on hidden layers, identity output."""

    def __init__(self, layer_sizes, rng: np.random.Generator | None = None):
        self.layer_sizes = [int(n) for n in layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"bad layer sizes {layer_sizes}")
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                bound = np.sqrt(6.0 / fan_in)
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        net = Mlp.__new__(Mlp)
        net.layer_sizes = list(self.layer_sizes)
        net.weights = [w.copy() for w in self.weights]
        net.biases = [b.copy() for b in self.biases]
        return net

    def load_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.layer_sizes[0]:
            raise ValueError(f"input dim {x.shape[1]} != {self.layer_sizes[0]}")
        return x, single

    def forward(self, x) -> np.ndarray:
        h, single = self._check(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h[0] if single else h

    __call__ = forward

    def forward_cached(self, x):
        h, single = self._check(x)
        acts = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts, single

    def backward(self, x, upstream, cache=None) -> list[np.ndarray]:
        """Gradients of ``sum(output * upstream)`` in ``params`` order."""
        acts, single = cache if cache is not None else self.forward_cached(x)
        g = np.asarray(upstream, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        if g.shape != acts[-1].shape:
            raise ValueError(f"upstream shape {g.shape} != output shape {acts[-1].shape}")
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0.0)
        return grads

    def input_gradient(self, x, upstream) -> np.ndarray:
        acts, single = self.forward_cached(x)
        g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        for i in range(len(self.weights) - 1, -1, -1):
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (acts[i] > 0.0)
        return g[0] if single else g

    # snapshot format: one ASCII header line, then raw little-endian float64

    def to_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        i = 0
        for p in self.params:
            p[...] = flat[i : i + p.size].reshape(p.shape)
            i += p.size
        if i != flat.size:
            raise ValueError(f"snapshot has {flat.size} values, net needs {i}")

    def dumps(self) -> bytes:
        flat = self.to_flat()
        header = "nn " + " ".join(str(n) for n in self.layer_sizes) + f" : {flat.size}\n"
        return header.encode("ascii") + flat.astype("<f8").tobytes()

    @classmethod
    def loads(cls, blob: bytes) -> "Mlp":
        header, _, body = blob.partition(b"\n")
        parts = header.decode("ascii").split()
        if parts[0] != "nn":
            raise ValueError("not a network snapshot")
        sizes = [int(p) for p in parts[1 : parts.index(":")]]
        count = int(parts[-1])
        flat = np.frombuffer(body, dtype="<f8")
        if flat.size != count:
            raise ValueError(f"truncated snapshot: {flat.size} of {count} values")
        net = cls(sizes)
        net.set_flat(flat)
        return net

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Mlp":
        with open(path, "rb") as fh:
            return cls.loads(fh.read())


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kw) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """In-place bias-corrected Adam update; returns ``params``."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
