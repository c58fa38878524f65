"""Differentiable operators used by the conversion model and the vocoders.

Layouts: sequences are ``[batch, time, channels]``; conv kernels are
``[kernel, in_channels, out_channels]``; linear weights are ``[in, out]``.
All ops keep the dtype of their inputs.
"""

from __future__ import annotations

import numpy as np

from ..dsp.stft import frame_indices, hann
from .tensor import ShapeError, Tensor, as_tensor, make_node


def _shape_error(op, a, b, why=""):
    msg = f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}"
    raise ShapeError(msg + (f" ({why})" if why else ""))


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _pair(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    return a, b


# elementwise algebra -------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    try:
        out = a.data + b.data
    except ValueError:
        _shape_error("add", a.shape, b.shape)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return make_node(out, (a, b), bw, "add")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        a._accumulate(-g)

    return make_node(-a.data, (a,), bw, "neg")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    try:
        out = a.data * b.data
    except ValueError:
        _shape_error("mul", a.shape, b.shape)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return make_node(out, (a, b), bw, "mul")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        a._accumulate(g * c)

    return make_node(a.data * a.dtype.type(c), (a,), bw, "scale")


def _unary(name, fwd, grad_from):
    def op(a) -> Tensor:
        a = as_tensor(a)
        out = fwd(a.data)

        def bw(g):
            a._accumulate(g * grad_from(a.data, out))

        return make_node(out, (a,), bw, name)

    op.__name__ = name
    return op


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


tanh = _unary("tanh", np.tanh, lambda x, y: 1.0 - y * y)
sigmoid = _unary("sigmoid", _sigmoid, lambda x, y: y * (1.0 - y))
relu = _unary("relu", lambda x: np.maximum(x, 0), lambda x, y: (x > 0).astype(x.dtype))
exp = _unary("exp", np.exp, lambda x, y: y)
log = _unary("log", np.log, lambda x, y: 1.0 / x)
sqrt = _unary("sqrt", np.sqrt, lambda x, y: 0.5 / y)
square = _unary("square", np.square, lambda x, y: 2.0 * x)
absolute = _unary("abs", np.abs, lambda x, y: np.sign(x))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    out = np.where(a.data > 0, a.data, a.data * a.dtype.type(slope))

    def bw(g):
        a._accumulate(np.where(a.data > 0, g, g * slope))

    return make_node(out, (a,), bw, "leaky_relu")


def detach(a) -> Tensor:
    return Tensor(as_tensor(a).data)


# reductions and structure --------------------------------------------------

def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return make_node(np.asarray(out), (a,), bw, "sum")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        a._accumulate(g.reshape(a.shape))

    return make_node(a.data.reshape(shape), (a,), bw, "reshape")


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        full = np.zeros_like(a.data)
        full[index] += g
        a._accumulate(full)

    return make_node(a.data[index], (a,), bw, "getitem")


def split(a, sections: int, axis=-1):
    size = a.shape[axis] // sections
    axis = axis % a.ndim
    out = []
    for i in range(sections):
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(i * size, (i + 1) * size)
        out.append(getitem(a, tuple(idx)))
    return out


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat: incompatible shapes " + ", ".join(str(t.shape) for t in tensors))
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def bw(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                t._accumulate(np.take(g, np.arange(lo, hi), axis=axis))

    return make_node(out, tuple(tensors), bw, "concat")


# linear maps ---------------------------------------------------------------

def matmul(x, w) -> Tensor:
    """``x[..., in] @ w[in, out]``."""
    x, w = _pair(x, w)
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        _shape_error("matmul", x.shape, w.shape, "x[..., in] @ w[in, out]")
    out = x.data @ w.data

    def bw(g):
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.reshape(-1, w.shape[0]).T @ g.reshape(-1, w.shape[1]))

    return make_node(out, (x, w), bw, "matmul")


def linear(x, w, b=None) -> Tensor:
    y = matmul(x, w)
    if b is not None:
        b = as_tensor(b, y.dtype)
        if b.shape != (w.shape[1],):
            _shape_error("linear", w.shape, b.shape, "bias must be [out]")
        y = add(y, b)
    return y


def _conv_padding(kernel, dilation, causal):
    total = (kernel - 1) * dilation
    if causal:
        return total, 0
    return total // 2, total - total // 2


def conv1d(x, w, b=None, dilation: int = 1, causal: bool = False) -> Tensor:
    """Dilated 1-D convolution over ``x[batch, time, in]`` with ``w[kernel, in, out]``.

    Causal mode pads ``(kernel-1)*dilation`` zeros on the left, so output ``t``
    reads inputs ``t - (kernel-1)*dilation .. t``. Otherwise padding is split
    (left gets the smaller half) and the output length equals the input length.
    """
    x, w = _pair(x, w)
    if x.ndim != 3 or w.ndim != 3 or x.shape[2] != w.shape[1]:
        _shape_error("conv1d", x.shape, w.shape, "x[B, T, in], w[K, in, out]")
    k = w.shape[0]
    left, right = _conv_padding(k, dilation, causal)
    bsz, t, cin = x.shape
    cout = w.shape[2]
    xp = np.pad(x.data, ((0, 0), (left, right), (0, 0)))
    out = np.zeros((bsz, t, cout), dtype=np.result_type(x.dtype, w.dtype))
    for j in range(k):
        out += xp[:, j * dilation : j * dilation + t, :] @ w.data[j]
    parents = (x, w)
    if b is not None:
        b = as_tensor(b, out.dtype)
        if b.shape != (cout,):
            _shape_error("conv1d", w.shape, b.shape, "bias must be [out]")
        out += b.data
        parents = (x, w, b)

    def bw(g):
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j * dilation : j * dilation + t, :] += g @ w.data[j].T
            x._accumulate(gxp[:, left : left + t, :])
        if w.requires_grad:
            g2 = g.reshape(-1, cout)
            gw = np.empty_like(w.data)
            for j in range(k):
                gw[j] = xp[:, j * dilation : j * dilation + t, :].reshape(-1, cin).T @ g2
            w._accumulate(gw)
        if b is not None and b.requires_grad:
            b._accumulate(g.reshape(-1, cout).sum(axis=0))

    return make_node(out, parents, bw, "conv1d")


def embedding(codes, table) -> Tensor:
    """Row lookup ``table[codes]`` (one-hot times matrix)."""
    table = as_tensor(table)
    codes = np.asarray(codes)
    if codes.size and (codes.min() < 0 or codes.max() >= table.shape[0]):
        raise ShapeError(f"embedding: codes outside [0, {table.shape[0]})")

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, codes.reshape(-1), g.reshape(-1, table.shape[1]))
        table._accumulate(gt)

    return make_node(table.data[codes], (table,), bw, "embedding")


# recurrent -----------------------------------------------------------------
#
# GRU (reset/update/candidate, gates ordered r, z, n in the 3H axis):
#   r  = sigmoid(x W_r + b_ir + h U_r + b_hr)
#   z  = sigmoid(x W_z + b_iz + h U_z + b_hz)
#   n  = tanh(x W_n + b_in + r * (h U_n + b_hn))
#   h' = (1 - z) * n + z * h

def _gru_check(x, h, w_ih, w_hh, b_ih, b_hh):
    hid = h.shape[-1]
    if w_ih.shape != (x.shape[-1], 3 * hid):
        _shape_error("gru", x.shape, w_ih.shape, "w_ih must be [in, 3H]")
    if w_hh.shape != (hid, 3 * hid):
        _shape_error("gru", h.shape, w_hh.shape, "w_hh must be [H, 3H]")
    if b_ih.shape != (3 * hid,) or b_hh.shape != (3 * hid,):
        _shape_error("gru", b_ih.shape, b_hh.shape, "biases must be [3H]")


def _gru_step(xp, h, w_hh, b_hh, hid):
    hp = h @ w_hh + b_hh
    r = _sigmoid(xp[:, :hid] + hp[:, :hid])
    z = _sigmoid(xp[:, hid : 2 * hid] + hp[:, hid : 2 * hid])
    hn = hp[:, 2 * hid :]
    n = np.tanh(xp[:, 2 * hid :] + r * hn)
    return (1.0 - z) * n + z * h, (r, z, n, hn)


def _gru_step_grad(gh, h_prev, cache, w_hh, hid):
    """Given dL/dh', return (dL/dxp, dL/dhp, dL/dh_prev through z-path)."""
    r, z, n, hn = cache
    dn = gh * (1.0 - z)
    dz = gh * (h_prev - n)
    da_n = dn * (1.0 - n * n)
    dr = da_n * hn
    da_r = dr * r * (1.0 - r)
    da_z = dz * z * (1.0 - z)
    dxp = np.concatenate([da_r, da_z, da_n], axis=1)
    dhp = np.concatenate([da_r, da_z, da_n * r], axis=1)
    dh_prev = gh * z + dhp @ w_hh.T
    return dxp, dhp, dh_prev


def gru_cell(x, h, w_ih, w_hh, b_ih, b_hh) -> Tensor:
    """One GRU step: ``x[B, in]``, ``h[B, H]`` -> ``h'[B, H]``."""
    x, h, w_ih, w_hh, b_ih, b_hh = (as_tensor(t) for t in (x, h, w_ih, w_hh, b_ih, b_hh))
    _gru_check(x, h, w_ih, w_hh, b_ih, b_hh)
    hid = h.shape[-1]
    xp = x.data @ w_ih.data + b_ih.data
    out, cache = _gru_step(xp, h.data, w_hh.data, b_hh.data, hid)

    def bw(g):
        dxp, dhp, dh_prev = _gru_step_grad(g, h.data, cache, w_hh.data, hid)
        if x.requires_grad:
            x._accumulate(dxp @ w_ih.data.T)
        if h.requires_grad:
            h._accumulate(dh_prev)
        if w_ih.requires_grad:
            w_ih._accumulate(x.data.T @ dxp)
        if w_hh.requires_grad:
            w_hh._accumulate(h.data.T @ dhp)
        if b_ih.requires_grad:
            b_ih._accumulate(dxp.sum(axis=0))
        if b_hh.requires_grad:
            b_hh._accumulate(dhp.sum(axis=0))

    return make_node(out, (x, h, w_ih, w_hh, b_ih, b_hh), bw, "gru_cell")


def gru_sequence(x, h0, w_ih, w_hh, b_ih, b_hh) -> Tensor:
    """Run :func:`gru_cell` over ``x[B, T, in]``; returns all states ``[B, T, H]``.

    Equivalent to chaining ``gru_cell`` T times, fused so that backpropagation
    through time is a single loop.
    """
    x, h0, w_ih, w_hh, b_ih, b_hh = (as_tensor(t) for t in (x, h0, w_ih, w_hh, b_ih, b_hh))
    _gru_check(x, h0, w_ih, w_hh, b_ih, b_hh)
    bsz, steps, _ = x.shape
    hid = h0.shape[-1]
    xp = x.data @ w_ih.data + b_ih.data
    hs = np.empty((bsz, steps, hid), dtype=xp.dtype)
    caches = []
    h = h0.data
    for t in range(steps):
        h, cache = _gru_step(xp[:, t], h, w_hh.data, b_hh.data, hid)
        hs[:, t] = h
        caches.append(cache)

    def bw(g):
        dxp = np.empty_like(xp)
        dhp_all = np.empty_like(xp)
        carry = np.zeros((bsz, hid), dtype=xp.dtype)
        for t in range(steps - 1, -1, -1):
            h_prev = hs[:, t - 1] if t > 0 else h0.data
            dxp[:, t], dhp_all[:, t], carry = _gru_step_grad(g[:, t] + carry, h_prev, caches[t], w_hh.data, hid)
        if x.requires_grad:
            x._accumulate(dxp @ w_ih.data.T)
        if h0.requires_grad:
            h0._accumulate(carry)
        if w_ih.requires_grad:
            w_ih._accumulate(x.data.reshape(-1, x.shape[-1]).T @ dxp.reshape(-1, 3 * hid))
        if w_hh.requires_grad:
            h_prevs = np.concatenate([h0.data[:, None], hs[:, :-1]], axis=1)
            w_hh._accumulate(h_prevs.reshape(-1, hid).T @ dhp_all.reshape(-1, 3 * hid))
        if b_ih.requires_grad:
            b_ih._accumulate(dxp.reshape(-1, 3 * hid).sum(axis=0))
        if b_hh.requires_grad:
            b_hh._accumulate(dhp_all.reshape(-1, 3 * hid).sum(axis=0))

    return make_node(hs, (x, h0, w_ih, w_hh, b_ih, b_hh), bw, "gru_sequence")


# losses --------------------------------------------------------------------

def log_softmax_np(logits):
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``softmax(logits)``."""
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        _shape_error("softmax_cross_entropy", logits.shape, targets.shape, "targets must match logits[..., :-1]")
    classes = logits.shape[-1]
    flat = logits.data.reshape(-1, classes)
    tgt = targets.reshape(-1)
    logp = log_softmax_np(flat)
    n = tgt.size
    loss = -logp[np.arange(n), tgt].mean()

    def bw(g):
        p = np.exp(logp)
        p[np.arange(n), tgt] -= 1.0
        logits._accumulate((g / n * p).reshape(logits.shape))

    return make_node(np.asarray(loss, dtype=logits.dtype), (logits,), bw, "softmax_cross_entropy")


def l1_loss(x, y) -> Tensor:
    """Mean absolute error."""
    x, y = _pair(x, y)
    if y.ndim and x.shape != y.shape:
        _shape_error("l1_loss", x.shape, y.shape)
    return mean(absolute(add(x, neg(y))))


def l2_loss(x, y) -> Tensor:
    """Mean squared error."""
    x, y = _pair(x, y)
    if y.ndim and x.shape != y.shape:
        _shape_error("l2_loss", x.shape, y.shape)
    return mean(square(add(x, neg(y))))


# spectral ------------------------------------------------------------------

def stft_mag(x, fft_size: int, hop_size: int, win_size: int, floor: float = 1e-7) -> Tensor:
    """Differentiable STFT magnitude ``[B, frames, bins]`` of ``x[B, T]``.

    Same centring as :func:`cycnpf.dsp.stft.stft_magnitude`. The magnitude is
    ``sqrt(re^2 + im^2 + floor^2)`` so the gradient stays finite at zero.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"stft_mag: expected [B, T], got {x.shape}")
    pad = win_size // 2
    length = x.shape[1]
    if length <= pad:
        raise ShapeError(f"stft_mag: signal length {length} too short for window {win_size}")
    xp = np.pad(x.data, ((0, 0), (pad, pad)), mode="reflect")
    idx = frame_indices(length, hop_size, win_size)
    window = hann(win_size).astype(x.dtype)
    spec = np.fft.rfft(xp[:, idx] * window, n=fft_size, axis=-1)
    mag = np.sqrt(spec.real**2 + spec.imag**2 + floor**2).astype(x.dtype)

    def bw(g):
        gspec = g * spec / mag
        gspec[..., 1:-1] *= 0.5
        gframes = np.fft.irfft(gspec, n=fft_size, axis=-1)[..., :win_size] * fft_size * window
        gxp = np.zeros(xp.shape, dtype=np.float64)
        for t in range(idx.shape[0]):
            gxp[:, t * hop_size : t * hop_size + win_size] += gframes[:, t]
        gx = gxp[:, pad : pad + length].copy()
        # adjoint of reflect padding: fold the mirrored edges back
        gx[:, 1 : pad + 1] += gxp[:, :pad][:, ::-1]
        gx[:, length - 1 - pad : length - 1] += gxp[:, pad + length :][:, ::-1]
        x._accumulate(gx.astype(x.dtype))

    return make_node(mag, (x,), bw, "stft_mag")
