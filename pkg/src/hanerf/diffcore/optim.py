"""Parameter containers, the forward/backward driver and the Adam update."""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, TrainingDivergenceError
from .tensor import Tensor, backward


@dataclass
class ParameterSet:
    """Named parameter arrays plus per-parameter Adam state."""

    values: dict = field(default_factory=dict)
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)

    def add(self, name, value):
        if name in self.values:
            raise ConfigError(f"duplicate parameter name {name!r}")
        value = np.array(value, order="C", copy=True)
        self.values[name] = value
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        self.steps[name] = 0

    def __getitem__(self, name):
        return self.values[name]

    def __contains__(self, name):
        return name in self.values

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def names(self):
        return list(self.values)

    def subset(self, prefix):
        return {k: v for k, v in self.values.items() if k.startswith(prefix)}

    def copy(self):
        return ParameterSet(
            {k: v.copy() for k, v in self.values.items()},
            {k: v.copy() for k, v in self.m.items()},
            {k: v.copy() for k, v in self.v.items()},
            dict(self.steps),
        )

    def astype(self, dtype):
        out = ParameterSet()
        for k, v in self.values.items():
            out.add(k, v.astype(dtype))
        return out

    def num_values(self):
        return int(sum(v.size for v in self.values.values()))

    def leaves(self, trainable=None):
        """Fresh leaf tensors for one forward pass.

        ``trainable`` restricts which names receive gradients (all by default).
        """
        out = {}
        for k, v in self.values.items():
            grad = trainable is None or k in trainable
            out[k] = Tensor(v, requires_grad=grad, name=k)
        return out


def as_tensors(params):
    """Mapping of parameter tensors for a forward pass.

    A :class:`ParameterSet` or a dict of plain arrays becomes constant leaves
    (no gradient); a dict that already holds tensors is returned unchanged.
    """
    if isinstance(params, ParameterSet):
        return params.leaves(trainable=())
    if all(isinstance(v, Tensor) for v in params.values()):
        return params
    return {k: v if isinstance(v, Tensor) else Tensor(np.asarray(v), name=k) for k, v in params.items()}


def forward_backward(loss_fn, params, trainable=None, has_aux=False):
    """Evaluate ``loss_fn(leaves)`` and its gradient w.r.t. every parameter.

    ``loss_fn`` receives a dict of leaf tensors and returns a scalar
    :class:`Tensor`, or ``(Tensor, aux)`` when ``has_aux`` is set. Parameters
    that do not influence the loss get an all-zero gradient.
    """
    leaves = params.leaves(trainable)
    result = loss_fn(leaves)
    loss, aux = result if has_aux else (result, None)
    value = float(loss.data)
    if not math.isfinite(value):
        raise TrainingDivergenceError(f"non-finite loss {value}")
    backward(loss)
    grads = {}
    for name, leaf in leaves.items():
        if trainable is not None and name not in trainable:
            continue
        grads[name] = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
    if has_aux:
        return value, grads, aux
    return value, grads


def clip_by_global_norm(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        return {k: g * np.asarray(scale, dtype=g.dtype) for k, g in grads.items()}, total
    return grads, total


def adam_step(params, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update with bias correction; returns ``params``.

    Only names present in ``grads`` are touched.
    """
    for name, g in grads.items():
        if name not in params.values:
            raise ConfigError(f"gradient for unknown parameter {name!r}")
        p = params.values[name]
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape {g.shape} does not match parameter {name!r} {p.shape}")
        g = g.astype(p.dtype, copy=False)
        step = params.steps[name] + 1
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)
        params.steps[name] = step
    return params
