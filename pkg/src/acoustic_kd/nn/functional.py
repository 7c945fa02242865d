"""Differentiable operations. Layouts are channels-last:
conv1d   x [N, L, Cin],    kernel [k, Cin, Cout]
conv2d   x [N, H, W, Cin], kernel [kh, kw, Cin, Cout]
Convolutions use the cross-correlation convention.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor

PROB_EPS = 1e-12
# im2col is used for 1D convolutions whose column matrix stays below this many elements
_IM2COL_LIMIT = 1 << 24


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _wrap(other, like: Tensor) -> Tensor:
    if isinstance(other, Tensor):
        return other
    return Tensor(np.asarray(other, dtype=like.dtype))


# ------------------------------------------------------------ elementwise


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = _wrap(b, a)
    sa, sb = a.shape, b.shape
    return Tensor(a.data + b.data, parents=(a, b), op="add",
                  grad_fn=lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, parents=(a,), op="neg", grad_fn=lambda g: (-g,))


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = _wrap(b, a)
    ad, bd = a.data, b.data

    def grad_fn(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return Tensor(ad * bd, parents=(a, b), op="mul", grad_fn=grad_fn)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0).astype(x.dtype, copy=False), parents=(x,), op="relu",
                  grad_fn=lambda g: (g * mask,))


# ---------------------------------------------------------------- shaping


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return Tensor(x.data.reshape(shape), parents=(x,), op="reshape", grad_fn=lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor(np.ascontiguousarray(x.data.transpose(axes)), parents=(x,), op="transpose",
                  grad_fn=lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors), op="concat",
                  grad_fn=lambda g: tuple(np.split(g, cuts, axis=axis)))


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = x.shape

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), parents=(x,), op="sum", grad_fn=grad_fn)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mul(sum(x, axis, keepdims), 1.0 / n)


# -------------------------------------------------------------- products


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a[..., k] @ b[k, m]``."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2:
        raise ValueError("matmul expects a 2D right operand")
    lead = a.shape[:-1]
    a2 = a.data.reshape(-1, a.shape[-1])
    out = (a2 @ b.data).reshape(lead + (b.shape[1],))

    def grad_fn(g):
        g2 = g.reshape(-1, g.shape[-1])
        ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
        gb = a2.T @ g2 if b.requires_grad else None
        return ga, gb

    return Tensor(out, parents=(a, b), op="matmul", grad_fn=grad_fn)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Dense map over the last axis (a 1x1 convolution in channels-last layout)."""
    y = matmul(x, weight)
    return add(y, bias) if bias is not None else y


# ------------------------------------------------------------ convolution


def conv_output_size(size: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 3:
        raise ValueError("conv1d expects x [N, L, Cin] and kernel [k, Cin, Cout]")
    n, length, cin = x.shape
    k, kcin, cout = kernel.shape
    if cin != kcin:
        raise ValueError(f"conv1d channel mismatch: input has {cin}, kernel expects {kcin}")
    if k > length + 2 * padding:
        raise ValueError(f"kernel {k} longer than padded input {length + 2 * padding}")
    lo = conv_output_size(length, k, stride, padding)
    xp = np.pad(x.data, ((0, 0), (padding, padding), (0, 0))) if padding else x.data
    w = kernel.data
    span = stride * (lo - 1) + 1
    use_cols = n * lo * cin * k <= _IM2COL_LIMIT and k > 1
    if use_cols:
        win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)[:, ::stride][:, :lo]  # N, lo, cin, k
        cols = win.reshape(n * lo, cin * k)
        wmat = w.transpose(1, 0, 2).reshape(cin * k, cout)
        out = (cols @ wmat).reshape(n, lo, cout)
    else:
        out = np.zeros((n, lo, cout), dtype=np.result_type(xp, w))
        for i in range(k):
            out += (xp[:, i:i + span:stride].reshape(n * lo, cin) @ w[i]).reshape(n, lo, cout)

    def grad_fn(g):
        g2 = g.reshape(n * lo, cout)
        gx = gw = None
        if use_cols:
            if kernel.requires_grad:
                gw = (cols.T @ g2).reshape(cin, k, cout).transpose(1, 0, 2)
            if x.requires_grad:
                dcols = (g2 @ wmat.T).reshape(n, lo, cin, k)
                gxp = np.zeros_like(xp)
                for i in range(k):
                    gxp[:, i:i + span:stride] += dcols[..., i]
        else:
            gw = np.empty_like(w) if kernel.requires_grad else None
            gxp = np.zeros_like(xp) if x.requires_grad else None
            for i in range(k):
                if gw is not None:
                    gw[i] = xp[:, i:i + span:stride].reshape(n * lo, cin).T @ g2
                if gxp is not None:
                    gxp[:, i:i + span:stride] += (g2 @ w[i].T).reshape(n, lo, cin)
        if x.requires_grad:
            gx = gxp[:, padding:padding + length] if padding else gxp
        return gx, gw

    y = Tensor(out, parents=(x, kernel), op="conv1d", grad_fn=grad_fn)
    return add(y, bias) if bias is not None else y


def _corr2d_s1(xp: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Stride-1 valid cross-correlation by chunked im2col: xp [N, H, W, Cin], w [kh, kw, Cin, Cout]."""
    n, hp, wp, cin = xp.shape
    kh, kw, _, cout = w.shape
    ho, wo = hp - kh + 1, wp - kw + 1
    wmat = w.reshape(kh * kw * cin, cout)
    out = np.empty((n, ho, wo, cout), dtype=np.result_type(xp, w))
    per = max(1, _IM2COL_LIMIT // max(1, ho * wo * kh * kw * cin))
    for s0 in range(0, n, per):
        win = np.lib.stride_tricks.sliding_window_view(xp[s0:s0 + per], (kh, kw), axis=(1, 2))
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(-1, kh * kw * cin)  # rows ordered (kh, kw, cin)
        out[s0:s0 + per] = (cols @ wmat).reshape(-1, ho, wo, cout)
    return out


def _corr2d_s1_kernel_grad(xp: np.ndarray, g: np.ndarray, kh: int, kw: int) -> np.ndarray:
    n, hp, wp, cin = xp.shape
    _, ho, wo, cout = g.shape
    gw = np.zeros((kh * kw * cin, cout), dtype=np.result_type(xp, g))
    per = max(1, _IM2COL_LIMIT // max(1, ho * wo * kh * kw * cin))
    for s0 in range(0, n, per):
        win = np.lib.stride_tricks.sliding_window_view(xp[s0:s0 + per], (kh, kw), axis=(1, 2))
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(-1, kh * kw * cin)
        gw += cols.T @ g[s0:s0 + per].reshape(-1, cout)
    return gw.reshape(kh, kw, cin, cout)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ValueError("conv2d expects x [N, H, W, Cin] and kernel [kh, kw, Cin, Cout]")
    n, h, wd, cin = x.shape
    kh, kw, kcin, cout = kernel.shape
    if cin != kcin:
        raise ValueError(f"conv2d channel mismatch: input has {cin}, kernel expects {kcin}")
    if kh > h + 2 * padding or kw > wd + 2 * padding:
        raise ValueError("kernel larger than padded input")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(wd, kw, stride, padding)
    p = padding
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p), (0, 0))) if p else x.data
    w = kernel.data
    sh, sw = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    rows = n * ho * wo
    if stride == 1:
        out = _corr2d_s1(xp, w)
    else:
        out = np.zeros((rows, cout), dtype=np.result_type(xp, w))
        for i in range(kh):
            for j in range(kw):
                out += xp[:, i:i + sh:stride, j:j + sw:stride].reshape(rows, cin) @ w[i, j]
        out = out.reshape(n, ho, wo, cout)

    def grad_fn(g):
        gw = gx = None
        if stride == 1:
            if kernel.requires_grad:
                gw = _corr2d_s1_kernel_grad(xp, g, kh, kw)
            if x.requires_grad:
                # full correlation of the output gradient with the flipped, channel-swapped kernel
                gpad = np.pad(g, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
                gxp = _corr2d_s1(gpad, np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2)))
                gx = gxp[:, p:p + h, p:p + wd] if p else gxp
            return gx, gw
        g2 = g.reshape(rows, cout)
        gw = np.empty_like(w) if kernel.requires_grad else None
        gxp = np.zeros_like(xp) if x.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                if gw is not None:
                    gw[i, j] = xp[:, i:i + sh:stride, j:j + sw:stride].reshape(rows, cin).T @ g2
                if gxp is not None:
                    gxp[:, i:i + sh:stride, j:j + sw:stride] += (g2 @ w[i, j].T).reshape(n, ho, wo, cin)
        if gxp is not None:
            gx = gxp[:, p:p + h, p:p + wd] if p else gxp
        return gx, gw

    y = Tensor(out, parents=(x, kernel), op="conv2d", grad_fn=grad_fn)
    return add(y, bias) if bias is not None else y


# ---------------------------------------------------------------- pooling


def _pool_pads(size: int, window: int, stride: int, padding) -> tuple[int, int]:
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + window - size, 0)
        return total // 2, total - total // 2
    return int(padding), int(padding)


def maxpool1d(x: Tensor, window: int, stride: int | None = None, padding=0) -> Tensor:
    """Max over windows of x [N, L, C]; gradient goes to the first maximum in each window."""
    if window < 1:
        raise ValueError("pool window must be >= 1")
    stride = window if stride is None else stride
    n, length, c = x.shape
    before, after = _pool_pads(length, window, stride, padding)
    lp = length + before + after
    if window > lp:
        raise ValueError(f"pool window {window} larger than padded input {lp}")
    lo = (lp - window) // stride + 1
    xp = np.pad(x.data, ((0, 0), (before, after), (0, 0)), constant_values=-np.inf) if before or after else x.data
    span = stride * (lo - 1) + 1
    best = xp[:, 0:span:stride].copy()
    arg = np.zeros(best.shape, dtype=np.int8 if window < 128 else np.int32)
    for i in range(1, window):
        cand = xp[:, i:i + span:stride]
        m = cand > best
        best = np.where(m, cand, best)
        arg[m] = i

    def grad_fn(g):
        gxp = np.zeros_like(xp)
        for i in range(window):
            gxp[:, i:i + span:stride] += np.where(arg == i, g, 0)
        return (gxp[:, before:before + length],)

    return Tensor(best, parents=(x,), op="maxpool1d", grad_fn=grad_fn)


def maxpool2d(x: Tensor, window: int | tuple = 2, stride: int | None = None, padding=0) -> Tensor:
    """Max over windows of x [N, H, W, C]; ties resolve to the lowest row-major window index."""
    kh, kw = (window, window) if np.isscalar(window) else window
    if kh < 1 or kw < 1:
        raise ValueError("pool window must be >= 1")
    stride = kh if stride is None else stride
    n, h, wd, c = x.shape
    hb, ha = _pool_pads(h, kh, stride, padding)
    wb, wa = _pool_pads(wd, kw, stride, padding)
    hp, wp = h + hb + ha, wd + wb + wa
    if kh > hp or kw > wp:
        raise ValueError("pool window larger than padded input")
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1
    pads = ((0, 0), (hb, ha), (wb, wa), (0, 0))
    xp = np.pad(x.data, pads, constant_values=-np.inf) if hb or ha or wb or wa else x.data
    sh, sw = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    best = xp[:, 0:sh:stride, 0:sw:stride].copy()
    arg = np.zeros(best.shape, dtype=np.int16)
    for i in range(kh):
        for j in range(kw):
            if i == 0 and j == 0:
                continue
            cand = xp[:, i:i + sh:stride, j:j + sw:stride]
            m = cand > best
            best = np.where(m, cand, best)
            arg[m] = i * kw + j

    def grad_fn(g):
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, i:i + sh:stride, j:j + sw:stride] += np.where(arg == i * kw + j, g, 0)
        return (gxp[:, hb:hb + h, wb:wb + wd],)

    return Tensor(best, parents=(x,), op="maxpool2d", grad_fn=grad_fn)


# ---------------------------------------------------------- normalisation


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
              training: bool, momentum: float = 0.9, eps: float = 1e-5) -> Tensor:
    """Per-channel (last axis) batch normalisation.

    In training mode statistics come from the batch and the running buffers are
    updated in place as ``momentum * running + (1 - momentum) * batch``.
    """
    x = as_tensor(x)
    axes = tuple(range(x.ndim - 1))
    xd = x.data
    if training:
        if x.shape[0] < 2:
            raise ValueError("batchnorm in training mode needs a batch of at least 2")
        mu = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        running_mean *= momentum
        running_mean += (1 - momentum) * mu
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mu, var = running_mean.astype(xd.dtype), running_var.astype(xd.dtype)
    inv = (1.0 / np.sqrt(var + eps)).astype(xd.dtype)
    xhat = (xd - mu) * inv
    out = xhat * gamma.data + beta.data
    count = xd.size // xd.shape[-1]

    def grad_fn(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        dxhat = g * gamma.data
        if training:
            gx = (inv / count) * (count * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
        else:
            gx = dxhat * inv
        return gx, gg, gb

    return Tensor(out, parents=(x, gamma, beta), op="batchnorm", grad_fn=grad_fn)


# ------------------------------------------------------ softmax and losses


def softmax_t(logits: Tensor, temperature: float = 1.0) -> Tensor:
    """Row softmax of ``logits / temperature`` with max subtraction."""
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    logits = as_tensor(logits)
    z = logits.data / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)) / temperature,)

    return Tensor(p, parents=(logits,), op="softmax", grad_fn=grad_fn)


def _check_prob_rows(arr: np.ndarray, what: str, tol: float = 1e-6) -> None:
    if np.any(arr < 0):
        raise ValueError(f"{what} has negative entries")
    if not np.allclose(arr.sum(axis=-1), 1.0, atol=tol, rtol=0):
        raise ValueError(f"{what} rows do not sum to 1")


def cross_entropy(targets, predictions: Tensor, eps: float = PROB_EPS) -> Tensor:
    """Batch mean of -sum_c t_c log p_c, with log floored at ``eps``."""
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
    predictions = as_tensor(predictions)
    p = predictions.data
    if t.shape != p.shape or p.ndim != 2:
        raise ValueError(f"targets {t.shape} and predictions {p.shape} must both be [N, C]")
    _check_prob_rows(t, "targets")
    _check_prob_rows(p, "predictions")
    n = p.shape[0]
    safe = np.maximum(p, eps)
    loss = -(t * np.log(safe)).sum() / n

    def grad_fn(g):
        return (np.where(p > eps, -t / safe, 0.0) * (g / n),)

    return Tensor(np.asarray(loss, dtype=p.dtype), parents=(predictions,), op="cross_entropy", grad_fn=grad_fn)
