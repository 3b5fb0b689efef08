"""Differentiable primitives.

Each function takes and returns :class:`~seizurecs.tensor.Tensor` and
records its adjoint through :func:`~seizurecs.tensor.make_result`.
Convolution and pooling operate on ``B x C x L`` batches (a 2D ``C x L``
input is treated as a batch of one).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import sparse

from .errors import ContractError, DimensionError, StateError
from .tensor import Tensor, as_tensor, make_result

PROB_FLOOR = 1e-12


def _scalar(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


# -- elementwise ------------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    """Elementwise sum of two same-shape tensors, or tensor plus a scalar."""
    if _scalar(b):
        return make_result(a.data + float(b), (a,), "add_scalar", lambda g: (g,))
    b = as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    return make_result(a.data + b.data, (a, b), "add", lambda g: (g, g))


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), "neg", lambda g: (-g,))


def sub(a: Tensor, b) -> Tensor:
    if _scalar(b):
        return add(a, -float(b))
    b = as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape} differ")
    return make_result(a.data - b.data, (a, b), "sub", lambda g: (g, -g))


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product of same-shape tensors, or scaling by a scalar."""
    if _scalar(b):
        c = float(b)
        return make_result(a.data * c, (a,), "scale", lambda g: (g * c,))
    b = as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} differ")
    ad, bd = a.data, b.data
    return make_result(ad * bd, (a, b), "mul", lambda g: (g * bd, g * ad))


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors the Tensor method name
    shape = a.shape
    return make_result(np.asarray(a.data.sum()), (a,), "sum", lambda g: (np.full(shape, float(g)),))


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    return make_result(np.asarray(a.data.mean()), (a,), "mean", lambda g: (np.full(shape, float(g) / n),))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {old} as {shape}") from exc
    return make_result(out, (a,), "reshape", lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result(
        np.ascontiguousarray(a.data.transpose(axes)), (a,), "transpose", lambda g: (g.transpose(inverse),)
    )


# -- linear algebra -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2D matrix product with adjoints ``da = g b^T`` and ``db = a^T g``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = ad.T @ g if b.requires_grad else None
        return ga, gb

    return make_result(ad @ bd, (a, b), "matmul", backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape ``B x in`` and ``weight``
    of shape ``out x in``."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    inputs = (x, weight)
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
        out = out + bias.data
        inputs = (x, weight, bias)

    def backward(g):
        grads = [g @ wd if x.requires_grad else None, g.T @ xd]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    return make_result(out, inputs, "linear", backward)


# -- convolution and pooling -------------------------------------------------


def _as_batch(x: Tensor, op: str) -> tuple[Tensor, bool]:
    if x.ndim == 2:
        return reshape(x, (1,) + x.shape), True
    if x.ndim != 3:
        raise DimensionError(f"{op}: expected C x L or B x C x L input, got {x.shape}")
    return x, False


def _out_len(length: int, kernel: int, stride: int, padding: int, op: str) -> int:
    if stride < 1 or padding < 0:
        raise ContractError(f"{op}: stride must be >= 1 and padding >= 0")
    if length + 2 * padding < kernel:
        raise DimensionError(f"{op}: kernel {kernel} longer than padded input {length + 2 * padding}")
    return (length + 2 * padding - kernel) // stride + 1


def _scatter_windows(cols: np.ndarray, padded_len: int, stride: int) -> np.ndarray:
    """Adjoint of the strided window view: ``cols`` is ``B x C x Lout x K``."""
    b, c, lout, k = cols.shape
    out = np.zeros((b, c, padded_len))
    span = stride * (lout - 1) + 1
    for j in range(k):
        out[:, :, j : j + span : stride] += cols[:, :, :, j]
    return out


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation along time with kernels spanning all input channels.

    ``weight`` is ``C_out x C_in x K``; output length is
    ``(L + 2*padding - K) // stride + 1``.
    """
    x, squeezed = _as_batch(x, "conv1d")
    bsz, cin, length = x.shape
    if weight.ndim != 3 or weight.shape[1] != cin:
        raise DimensionError(f"conv1d: input {x.shape} incompatible with kernels {weight.shape}")
    cout, _, k = weight.shape
    lout = _out_len(length, k, stride, padding, "conv1d")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    windows = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :][:, :, :lout, :]
    cols = windows.transpose(0, 2, 1, 3).reshape(bsz * lout, cin * k)
    wmat = weight.data.reshape(cout, cin * k)
    out = (cols @ wmat.T).reshape(bsz, lout, cout).transpose(0, 2, 1)
    if bias is not None:
        if bias.shape != (cout,):
            raise DimensionError(f"conv1d: bias {bias.shape} does not match {cout} kernels")
        out = out + bias.data[None, :, None]
    out = np.ascontiguousarray(out)
    inputs = (x, weight) if bias is None else (x, weight, bias)
    padded_len = xp.shape[2]

    def backward(g):
        gm = g.transpose(0, 2, 1).reshape(bsz * lout, cout)
        grads = [None, (gm.T @ cols).reshape(cout, cin, k)]
        if x.requires_grad:
            dcols = (gm @ wmat).reshape(bsz, lout, cin, k).transpose(0, 2, 1, 3)
            dxp = _scatter_windows(dcols, padded_len, stride)
            grads[0] = dxp[:, :, padding : padding + length]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return grads

    y = make_result(out, inputs, "conv1d", backward)
    return reshape(y, y.shape[1:]) if squeezed else y


def maxpool1d(x: Tensor, kernel: int, stride: int | None = None, padding: int = 0) -> Tensor:
    """Max over sliding windows; the gradient goes to the first maximal index."""
    stride = kernel if stride is None else stride
    x, squeezed = _as_batch(x, "maxpool1d")
    bsz, c, length = x.shape
    lout = _out_len(length, kernel, stride, padding, "maxpool1d")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)), constant_values=-np.inf) if padding else x.data
    windows = sliding_window_view(xp, kernel, axis=2)[:, :, ::stride, :][:, :, :lout, :]
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    padded_len = xp.shape[2]

    def backward(g):
        cols = np.zeros((bsz, c, lout, kernel))
        np.put_along_axis(cols, idx[..., None], g[..., None], axis=-1)
        dxp = _scatter_windows(cols, padded_len, stride)
        return (dxp[:, :, padding : padding + length],)

    y = make_result(np.ascontiguousarray(out), (x,), "maxpool1d", backward)
    return reshape(y, y.shape[1:]) if squeezed else y


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the last (time) axis: ``B x C x L -> B x C``."""
    length = x.shape[-1]
    shape = x.shape
    return make_result(
        x.data.mean(axis=-1),
        (x,),
        "global_avg_pool",
        lambda g: (np.broadcast_to(g[..., None] / length, shape).copy(),),
    )


@lru_cache(maxsize=64)
def _interp_matrix(length: int, target: int) -> sparse.csr_matrix:
    """``target x length`` matrix of endpoint-aligned linear interpolation."""
    i = np.arange(target, dtype=np.int64)
    if target == 1 or length == 1:
        lo = np.zeros(target, dtype=np.int64) if length == 1 else np.zeros(1, dtype=np.int64)
        frac = np.zeros(target)
    else:
        num = i * (length - 1)
        lo = num // (target - 1)
        frac = (num % (target - 1)) / (target - 1)
    hi = np.minimum(lo + 1, length - 1)
    rows = np.concatenate([i, i])
    cols = np.concatenate([lo, hi])
    vals = np.concatenate([1.0 - frac, frac])
    keep = vals != 0.0
    m = sparse.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(target, length))
    m.sum_duplicates()
    return m


def upsample_linear(x: Tensor, target_len: int) -> Tensor:
    """Linear interpolation of the last axis to ``target_len`` samples, with
    the first and last samples kept in place."""
    if target_len < 1:
        raise ContractError(f"upsample_linear: target_len must be >= 1, got {target_len}")
    length = x.shape[-1]
    lead = x.shape[:-1]
    m = _interp_matrix(length, int(target_len))
    mt = m.T.tocsr()
    flat = x.data.reshape(-1, length)
    out = np.asarray(m @ flat.T).T.reshape(lead + (target_len,))

    def backward(g):
        return (np.asarray(mt @ g.reshape(-1, target_len).T).T.reshape(lead + (length,)),)

    return make_result(np.ascontiguousarray(out), (x,), "upsample_linear", backward)


# -- normalization -----------------------------------------------------------


def batchnorm1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray | None = None,
    running_var: np.ndarray | None = None,
    training: bool = True,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over batch and time of a ``B x C x L`` input.

    In training mode batch statistics are used and, when given, the running
    arrays are updated in place (variance tracked unbiased). In eval mode
    the running statistics are required.
    """
    if x.ndim != 3:
        raise DimensionError(f"batchnorm1d: expected B x C x L input, got {x.shape}")
    bsz, c, length = x.shape
    if bsz < 1 or gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm1d: input {x.shape} with affine {gamma.shape}/{beta.shape}")
    gd, bd = gamma.data, beta.data
    xd = x.data

    if not training:
        if running_mean is None or running_var is None:
            raise StateError("batchnorm1d: eval mode needs running statistics")
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (xd - running_mean[None, :, None]) * inv[None, :, None]
        out = xhat * gd[None, :, None] + bd[None, :, None]

        def backward_eval(g):
            return (
                g * (gd * inv)[None, :, None],
                (g * xhat).sum(axis=(0, 2)),
                g.sum(axis=(0, 2)),
            )

        return make_result(out, (x, gamma, beta), "batchnorm1d", backward_eval)

    n = bsz * length
    mu = xd.mean(axis=(0, 2))
    centered = xd - mu[None, :, None]
    var = (centered**2).mean(axis=(0, 2))
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv[None, :, None]
    out = xhat * gd[None, :, None] + bd[None, :, None]

    if running_mean is not None and running_var is not None:
        unbiased = var * n / (n - 1) if n > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased

    def backward(g):
        dgamma = (g * xhat).sum(axis=(0, 2))
        dbeta = g.sum(axis=(0, 2))
        gx = g * gd[None, :, None]
        dx = (inv / n)[None, :, None] * (
            n * gx - gx.sum(axis=(0, 2))[None, :, None] - xhat * (gx * xhat).sum(axis=(0, 2))[None, :, None]
        )
        return dx, dgamma, dbeta

    return make_result(out, (x, gamma, beta), "batchnorm1d", backward)


# -- activations -----------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0.0), (x,), "relu", lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    factor = np.where(x.data > 0, 1.0, slope)
    return make_result(x.data * factor, (x,), "leaky_relu", lambda g: (g * factor,))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return make_result(s, (x,), "softmax", backward)


# -- losses ---------------------------------------------------------------------


def cross_entropy(probs: Tensor, onehot) -> Tensor:
    """Batch mean of ``-sum(y * log p)`` on already-softmaxed rows.

    Probabilities are floored at ``PROB_FLOOR`` so the log stays finite.
    """
    onehot = as_tensor(onehot)
    if probs.shape != onehot.shape or probs.ndim != 2:
        raise DimensionError(f"cross_entropy: probabilities {probs.shape} vs targets {onehot.shape}")
    bsz = probs.shape[0]
    p = probs.data
    clipped = np.maximum(p, PROB_FLOOR)
    y = onehot.data
    loss = -(y * np.log(clipped)).sum() / bsz

    def backward(g):
        gp = np.where(p > PROB_FLOOR, -y / clipped, 0.0) * (float(g) / bsz)
        gy = -np.log(clipped) * (float(g) / bsz) if onehot.requires_grad else None
        return gp, gy

    return make_result(np.asarray(loss), (probs, onehot), "cross_entropy", backward)


def mse(a: Tensor, b) -> Tensor:
    """Mean of squared differences over all elements."""
    b = as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mse: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    n = diff.size

    def backward(g):
        ga = diff * (2.0 * float(g) / n)
        return ga, (-ga if b.requires_grad else None)

    return make_result(np.asarray((diff**2).mean()), (a, b), "mse", backward)
