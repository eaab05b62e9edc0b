"""Vectorized numpy implementations of the hot loss kernels.

These are the fallback selected when the compiled extension is unavailable;
both backends implement the same contract (see `driftcal._kernels`).
"""

import numpy as np


def softmax(logits, temperature=1.0):
    """Row-wise softmax of logits / temperature. temperature may be scalar or (N,)."""
    z = np.asarray(logits, dtype=np.float64)
    t = np.asarray(temperature, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    u = z / t
    u = u - u.max(axis=-1, keepdims=True)
    e = np.exp(u)
    return e / e.sum(axis=-1, keepdims=True)


def brier_loss_dtemp(logits, labels, temps):
    """Summed Brier score of softmax(z_i / T_i) against one-hot labels.

    Returns (loss, dldt) where dldt[i] is the derivative of the total loss
    with respect to T_i, the per-sample scalar temperature.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    t = np.asarray(temps, dtype=np.float64)
    n = z.shape[0]
    p = softmax(z, t)
    r = -p
    r[np.arange(n), y] += 1.0  # residual: one-hot minus probs
    loss = float(np.sum(r * r))
    # dL/du_k = -2 p_k (r_k - s), s = sum_c r_c p_c; dU_k/dT = -z_k / T^2
    s = np.sum(r * p, axis=1)
    g_u = -2.0 * p * (r - s[:, None])
    dldt = np.sum(g_u * z, axis=1) / (t * t) * -1.0
    return loss, dldt


def nll_loss_dtemp(logits, labels, temps):
    """Summed negative log-likelihood of softmax(z_i / T_i) at the true labels.

    Returns (loss, dldt) with dldt[i] = d(total loss)/dT_i.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    t = np.asarray(temps, dtype=np.float64)
    n = z.shape[0]
    u = z / t[:, None]
    m = u.max(axis=1)
    lse = m + np.log(np.sum(np.exp(u - m[:, None]), axis=1))
    loss = float(np.sum(lse - u[np.arange(n), y]))
    p = np.exp(u - lse[:, None])
    dldt = (z[np.arange(n), y] - np.sum(p * z, axis=1)) / (t * t)
    return loss, dldt
