"""Central finite-difference verification of analytic gradients."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .optim import forward_backward

ABS_FLOOR = 1e-8


@dataclass
class GradientReport:
    errors: dict = field(default_factory=dict)
    step: float = 1e-5
    checked: dict = field(default_factory=dict)

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)

    def worst(self):
        return max(self.errors.items(), key=lambda kv: kv[1])

    def __str__(self):
        rows = [f"{k}: {v:.3e} ({self.checked[k]} entries)" for k, v in self.errors.items()]
        return f"GradientReport(h={self.step}):\n  " + "\n  ".join(rows)


def relative_error(analytic, numeric, floor=ABS_FLOOR):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def gradient_check(loss_fn, params, h=1e-5, grads=None, max_entries=None, seed=0, scale="array"):
    """Compare analytic gradients of ``loss_fn`` with central differences.

    With ``scale="array"`` each parameter's error is normwise,
    ``max|a - n| / max(max|a|, max|n|)``; entries whose true gradient is
    close to zero then cannot fail on finite-difference roundoff alone
    (about ``1e-16 * |f| / h``). ``scale="entry"`` divides every entry by
    its own magnitude instead.
    ``grads`` overrides the analytic gradients (for testing the detector).
    With ``max_entries`` only a seeded random subset of each parameter's
    entries is probed; every parameter array is still covered.
    """
    for name, value in params.values.items():
        if value.dtype != np.float64:
            raise ConfigError(f"gradient check needs float64 parameters, {name!r} is {value.dtype}")
    if grads is None:
        _, grads = forward_backward(loss_fn, params)

    def evaluate():
        return float(loss_fn(params.leaves(trainable=())).data)

    rng = np.random.default_rng(seed)
    report = GradientReport(step=h)
    for name, value in params.values.items():
        flat = value.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        numeric = np.empty(idx.size)
        for n, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = evaluate()
            flat[i] = orig - h
            f_minus = evaluate()
            flat[i] = orig
            numeric[n] = (f_plus - f_minus) / (2.0 * h)
        analytic = np.asarray(grads[name]).reshape(-1)[idx]
        if scale == "array":
            ref = max(float(np.max(np.abs(analytic), initial=0.0)), float(np.max(np.abs(numeric), initial=0.0)))
            err = np.abs(analytic - numeric) / max(ref, ABS_FLOOR)
        elif scale == "entry":
            err = relative_error(analytic, numeric)
        else:
            raise ConfigError(f"unknown error scale {scale!r}")
        report.errors[name] = float(err.max()) if err.size else 0.0
        report.checked[name] = int(idx.size)
    return report
