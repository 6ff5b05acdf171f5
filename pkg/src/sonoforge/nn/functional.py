"""Stateless forward and backward ops for the classifier layers.

Activations are NHWC: (batch, height, width, channels). Every op
preserves the input dtype, so the same code runs float32 for training
and float64 for finite-difference checks.
"""
from __future__ import annotations

import numpy as np

# Upper bound on the transient im2col patch buffer per convolution call.
_PATCH_BUDGET_BYTES = 64 * 2**20


def _check_conv_shapes(x, kernel, bias):
    if x.ndim != 4:
        raise ValueError(f"conv input must be NHWC, got shape {x.shape}")
    if kernel.ndim != 4 or kernel.shape[:2] != (3, 3):
        raise ValueError(f"kernel must be (3, 3, Cin, Cout), got {kernel.shape}")
    if kernel.shape[2] != x.shape[3]:
        raise ValueError(
            f"kernel expects {kernel.shape[2]} input channels, input has {x.shape[3]}"
        )
    if bias is not None and bias.shape != (kernel.shape[3],):
        raise ValueError(f"bias shape {bias.shape} does not match {kernel.shape[3]} filters")


def _conv_chunk(n_items, h, w, cin, itemsize):
    per_item = h * w * 9 * cin * itemsize
    return max(1, min(n_items, _PATCH_BUDGET_BYTES // max(per_item, 1)))


_TAPS = tuple((kh, kw) for kh in range(3) for kw in range(3))


def _patches(xp_chunk, h, w):
    """Patch matrix of a zero-padded chunk, laid out (rows, 9*cin).

    Single-channel inputs are gathered tap-major as (9, rows) and handed
    to the matmul as a transposed view, which keeps every copy a long
    contiguous run; multichannel inputs stack the nine shifted slabs.
    """
    n, _, _, cin = xp_chunk.shape
    if cin == 1:
        flat = np.empty((9, n * h * w), dtype=xp_chunk.dtype)
        squeezed = xp_chunk[:, :, :, 0]
        for t, (kh, kw) in enumerate(_TAPS):
            flat[t] = squeezed[:, kh : kh + h, kw : kw + w].reshape(-1)
        return flat.T
    out = np.empty((n, h, w, 9, cin), dtype=xp_chunk.dtype)
    for t, (kh, kw) in enumerate(_TAPS):
        out[:, :, :, t, :] = xp_chunk[:, kh : kh + h, kw : kw + w, :]
    return out.reshape(n * h * w, 9 * cin)


def conv2d(x, kernel, bias=None):
    """3x3 same-padding cross-correlation, (N,H,W,Cin) -> (N,H,W,Cout)."""
    _check_conv_shapes(x, kernel, bias)
    n, h, w, cin = x.shape
    cout = kernel.shape[3]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    kmat = kernel.reshape(9 * cin, cout)
    out = np.empty((n, h, w, cout), dtype=x.dtype)
    out2d = out.reshape(-1, cout)
    step = _conv_chunk(n, h, w, cin, x.itemsize)
    for i in range(0, n, step):
        j = min(i + step, n)
        pat = _patches(xp[i:j], h, w)
        block = out2d[i * h * w : j * h * w]
        np.matmul(pat, kmat, out=block)
        if bias is not None:
            block += bias
    return out


def conv2d_backward(x, kernel, dy):
    """Gradients of conv2d wrt input, kernel and bias."""
    _check_conv_shapes(x, kernel, None)
    if dy.shape != x.shape[:3] + (kernel.shape[3],):
        raise ValueError(f"upstream gradient shape {dy.shape} does not match output")
    n, h, w, cin = x.shape
    cout = kernel.shape[3]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    kmat = kernel.reshape(9 * cin, cout)
    dxp = np.zeros_like(xp)
    dkmat = np.zeros((9 * cin, cout), dtype=x.dtype)
    dbias = dy.sum(axis=(0, 1, 2))
    step = _conv_chunk(n, h, w, cin, x.itemsize)
    for i in range(0, n, step):
        j = min(i + step, n)
        pat = _patches(xp[i:j], h, w)
        dyc = dy[i:j].reshape(-1, cout)
        dkmat += pat.T @ dyc
        dwin = (dyc @ kmat.T).reshape(j - i, h, w, 9, cin)
        for t, (kh, kw) in enumerate(_TAPS):
            dxp[i:j, kh : kh + h, kw : kw + w, :] += dwin[:, :, :, t, :]
    dx = dxp[:, 1:-1, 1:-1, :]
    return dx, dkmat.reshape(kernel.shape), dbias


# 2x2 window cells in row-major priority order for tie-breaking.
_QUADS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _pool_pad(x):
    n, h, w, c = x.shape
    if h % 2 == 0 and w % 2 == 0:
        return x
    xp = np.full((n, h + h % 2, w + w % 2, c), -np.inf, dtype=x.dtype)
    xp[:, :h, :w, :] = x
    return xp


def maxpool2(x):
    """2x2 stride-2 max pooling with ceiling semantics.

    An odd trailing row or column forms a partial window padded with
    -inf, so output dims are ceil(H/2) x ceil(W/2) and a lone cell
    passes through.
    """
    if x.ndim != 4:
        raise ValueError(f"pool input must be NHWC, got shape {x.shape}")
    xp = _pool_pad(x)
    it = iter(_QUADS)
    dh, dw = next(it)
    y = xp[:, dh::2, dw::2, :].copy()
    for dh, dw in it:
        np.maximum(y, xp[:, dh::2, dw::2, :], out=y)
    return y


def maxpool2_backward(x, y, dy):
    """Route each window's gradient to its max cell.

    On ties the first cell in row-major window order wins: earlier
    cells claim the gradient and later equal cells are masked out.
    """
    n, h, w, c = x.shape
    if y.shape != dy.shape or y.shape != (n, (h + 1) // 2, (w + 1) // 2, c):
        raise ValueError("pool backward shapes are inconsistent")
    xp = _pool_pad(x)
    dxp = np.zeros_like(xp)
    claimed = np.zeros(y.shape, dtype=bool)
    for dh, dw in _QUADS:
        won = (xp[:, dh::2, dw::2, :] == y) & ~claimed
        dxp[:, dh::2, dw::2, :] += dy * won
        claimed |= won
    return dxp[:, :h, :w, :]


def relu(x):
    return np.maximum(x, 0)


def relu_backward(dy, pre_activation_positive):
    """Mask upstream gradient by where the pre-activation was positive."""
    return dy * pre_activation_positive


def dense(x, weights, bias):
    """Affine map y = xW + b over a (N, D) batch."""
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ValueError(
            f"dense shapes incompatible: x {x.shape} vs weights {weights.shape}"
        )
    if bias.shape != (weights.shape[1],):
        raise ValueError(f"bias shape {bias.shape} does not match {weights.shape[1]} units")
    return x @ weights + bias


def dense_backward(x, weights, dy):
    return dy @ weights.T, x.T @ dy, dy.sum(axis=0)


def dropout(x, rate, rng):
    """Inverted dropout draw: (output, keep mask). Identity when rate = 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if rate == 0.0:
        return x, np.ones(x.shape, dtype=bool)
    mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate), mask


def dropout_backward(dy, mask, rate):
    return dy * mask / (1.0 - rate)


def batchnorm_stats(x):
    """Per-frequency-row mean and biased variance over batch and time."""
    if x.ndim != 4:
        raise ValueError(f"batchnorm input must be NHWC, got shape {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("batchnorm needs a nonempty batch")
    return x.mean(axis=(0, 2, 3)), x.var(axis=(0, 2, 3))


def batchnorm_apply(x, mean, var, gamma, beta, eps):
    """Normalize each frequency row, then scale and shift.

    Returns (y, xhat, inv_std); the latter two feed the backward pass.
    """
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return y, xhat, inv_std


def batchnorm_backward(dy, xhat, inv_std, gamma):
    """Gradients through the train-mode normalization (batch statistics)."""
    m = dy.shape[0] * dy.shape[2] * dy.shape[3]
    dbeta = dy.sum(axis=(0, 2, 3))
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    coeff = (gamma * inv_std / m)[None, :, None, None]
    dx = coeff * (
        m * dy - dbeta[None, :, None, None] - xhat * dgamma[None, :, None, None]
    )
    return dx, dgamma, dbeta


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy of integer labels and its logits gradient.

    Stable log-softmax via max subtraction; gradient is
    (softmax - onehot) / batch_size.
    """
    if logits.ndim != 2:
        raise ValueError(f"logits must be (N, classes), got shape {logits.shape}")
    labels = np.asarray(labels)
    n, n_classes = logits.shape
    if labels.shape != (n,):
        raise ValueError("labels must be one integer per batch row")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes - 1}]")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_norm
    loss = -log_p[np.arange(n), labels].mean()
    grad = np.exp(log_p)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return float(loss), grad
