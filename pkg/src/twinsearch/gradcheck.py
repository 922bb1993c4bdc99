"""Finite-difference gradient oracle for layers and full networks.

Works against anything exposing the layer protocol (``forward``/``backward``
plus a ``params`` list of live arrays), so whole networks qualify too.
Stochastic layers redraw identical noise on every evaluation because each
forward call receives a freshly seeded rng.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericError


def finite_diff_check(layer, x: np.ndarray, epsilon: float = 1e-5, seed: int = 0,
                      training: bool = False) -> float:
    """Compare analytic gradients against central differences.

    A scalar probe loss sum(output * R) with seeded random R drives both
    sides. Every input coordinate and every parameter coordinate is perturbed
    by +/- epsilon. Returns the maximum relative error with denominator
    max(|analytic|, |numeric|, 1e-8).
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ConfigError(f"epsilon must be in (0, 1e-2], got {epsilon}")
    x = np.asarray(x, dtype=np.float64)

    def probe_loss(x_val: np.ndarray) -> float:
        out, _ = layer.forward(x_val, training=training, rng=np.random.default_rng(seed))
        return float((out * probe).sum())

    out0, ctx0 = layer.forward(x, training=training, rng=np.random.default_rng(seed))
    probe = np.random.default_rng(seed + 1).standard_normal(out0.shape)
    analytic = layer.backward(ctx0, probe)
    for arr in [analytic.grad_input, *analytic.grad_params]:
        if not np.all(np.isfinite(arr)):
            raise NumericError("analytic gradient contains non-finite values")

    worst = 0.0

    def compare(a: float, n: float) -> None:
        nonlocal worst
        err = abs(a - n) / max(abs(a), abs(n), 1e-8)
        worst = max(worst, err)

    x_work = x.copy()
    flat = x_work.reshape(-1)
    grad_flat = analytic.grad_input.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        up = probe_loss(x_work)
        flat[i] = orig - epsilon
        down = probe_loss(x_work)
        flat[i] = orig
        compare(grad_flat[i], (up - down) / (2.0 * epsilon))

    for param, grad in zip(layer.params, analytic.grad_params):
        p_flat = param.reshape(-1)
        g_flat = grad.reshape(-1)
        for i in range(p_flat.size):
            orig = p_flat[i]
            p_flat[i] = orig + epsilon
            up = probe_loss(x)
            p_flat[i] = orig - epsilon
            down = probe_loss(x)
            p_flat[i] = orig
            compare(g_flat[i], (up - down) / (2.0 * epsilon))

    return worst
