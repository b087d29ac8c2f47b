"""Pure-numpy fallback for the compiled kernels in ``_kernels.pyx``."""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SCALE = 2.0**-53


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def counter_uniforms(seed, streams, n_slots):
    streams = np.ascontiguousarray(streams, dtype=np.uint64)
    with np.errstate(over="ignore"):
        seed_arr = np.full(streams.shape, seed, dtype=np.uint64)
        key = _mix64(seed_arr ^ _mix64(streams + _GOLDEN))
        ctr = (np.arange(1, n_slots + 1, dtype=np.uint64) * _GOLDEN)[None, :]
        v = _mix64(key[:, None] + ctr)
    return ((v >> np.uint64(11)).astype(np.float64) + 0.5) * _SCALE


def bt_loss_grad(diffs, w, lam):
    """Mean BT negative log-likelihood + lam*|w|^2 and its gradient."""
    z = diffs @ w
    # -log sigma(z) and sigma(-z), both evaluated without overflow
    loss = np.logaddexp(0.0, -z).mean()
    coef = np.exp(-np.logaddexp(0.0, z))
    grad = -(coef @ diffs) / diffs.shape[0] + 2.0 * lam * w
    return loss + lam * float(w @ w), grad
