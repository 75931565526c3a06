"""Dense N-d tensors with reverse-mode automatic differentiation.

The op graph is kept implicitly: every tensor produced by an operation
holds references to its parent tensors and a vjp closure.  ``backward``
topologically sorts that graph and visits each op exactly once.  The vjp
closures are themselves written in terms of tensor ops, so a computed
gradient can be differentiated again (``create_graph=True``) -- this is
what makes the R1 gradient penalty trainable.

float32 is the working precision.  Every op also runs in float64, which
the verification oracles (finite-difference gradient checks) use.
"""

from __future__ import annotations

import ctypes
import threading
from contextlib import contextmanager, nullcontext
from functools import lru_cache

import numpy as np


def _tune_malloc():
    # Large numpy temporaries otherwise go through mmap and are returned to
    # the OS on free; the refaulting dominates conv time on some kernels.
    # M_MMAP_THRESHOLD = -3, M_TRIM_THRESHOLD = -1.
    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        libc.mallopt(-3, 1 << 29)
        libc.mallopt(-1, 1 << 29)
    except OSError:
        pass


_tune_malloc()

__all__ = [
    "Tensor", "no_grad", "backward", "grad_of", "Adam",
    "add", "sub", "mul", "div", "neg", "exp", "log", "tanh", "sigmoid",
    "softplus", "leaky_relu", "log_softmax", "normalize_features",
    "reshape", "concat", "narrow", "tsum", "tmean",
    "conv2d", "bilinear_resize", "nearest_resize",
]

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A numpy array plus optional participation in the autodiff graph."""

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(()))

    def detach(self):
        """Same storage, cut from the graph."""
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self, create_graph=False):
        backward(self, create_graph)


def _wrap(x, like):
    """Lift a python scalar / ndarray to a constant Tensor in `like`'s dtype."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _record(data, parents, vjp):
    """Create the output tensor of an op, attaching graph info if recording."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


# -- backward machinery -----------------------------------------------------


def _toposort(root):
    """Ancestors-first order over the requires_grad subgraph; each node once."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _backprop(root, sinks, create_graph):
    """Core reverse pass.  Returns `order` and a dict id(tensor) -> grad.

    `sinks` restricts propagation to paths reaching those tensor ids; None
    propagates to every requires_grad ancestor.
    """
    if root.size != 1:
        raise ValueError(f"backward requires a scalar, got shape {root.shape}")
    if not root.requires_grad:
        raise ValueError("root does not require grad; nothing to differentiate")
    order = _toposort(root)
    if sinks is None:
        needed = {id(n) for n in order}
    else:
        needed = set(sinks)
        for node in order:  # ancestors first, so one pass suffices
            if id(node) in needed:
                continue
            if any(p.requires_grad and id(p) in needed for p in node._parents):
                needed.add(id(node))
    grads = {id(root): Tensor(np.ones_like(root.data))}
    ctx = nullcontext() if create_graph else no_grad()
    with ctx:
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node._vjp is None or id(node) not in needed:
                continue
            needs = tuple(p.requires_grad and id(p) in needed for p in node._parents)
            if not any(needs):
                continue
            pgrads = node._vjp(g, needs)
            for p, pg in zip(node._parents, pgrads):
                if pg is None:
                    continue
                acc = grads.get(id(p))
                grads[id(p)] = pg if acc is None else acc + pg
    return order, grads


def backward(loss, create_graph=False):
    """Populate .grad on every requires_grad ancestor of the scalar `loss`.

    Repeated calls accumulate into .grad.
    """
    order, grads = _backprop(loss, None, create_graph)
    for node in order:
        g = grads.get(id(node))
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g


def grad_of(output, inputs, create_graph=False):
    """Gradients of scalar `output` w.r.t. `inputs`, without touching .grad.

    With create_graph=True the returned tensors carry their own graph and
    can be differentiated again.
    """
    _, grads = _backprop(output, {id(t) for t in inputs}, create_graph)
    result = []
    for t in inputs:
        g = grads.get(id(t))
        if g is None:
            raise ValueError("an input is not reachable from the output")
        result.append(g)
    return result


# -- elementwise arithmetic ---------------------------------------------------


def _unbroadcast(g, shape):
    """Sum `g` back down to `shape` (the adjoint of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = tsum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = tsum(g, axis=axes, keepdims=True)
    return g


def add(a, b):
    a = _wrap(a, b) if not isinstance(a, Tensor) else a
    b = _wrap(b, a)

    def vjp(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(g, b.shape) if needs[1] else None)

    return _record(a.data + b.data, (a, b), vjp)


def sub(a, b):
    a = _wrap(a, b) if not isinstance(a, Tensor) else a
    b = _wrap(b, a)

    def vjp(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(-g, b.shape) if needs[1] else None)

    return _record(a.data - b.data, (a, b), vjp)


def mul(a, b):
    a = _wrap(a, b) if not isinstance(a, Tensor) else a
    b = _wrap(b, a)

    def vjp(g, needs):
        return (_unbroadcast(g * b, a.shape) if needs[0] else None,
                _unbroadcast(g * a, b.shape) if needs[1] else None)

    return _record(a.data * b.data, (a, b), vjp)


def div(a, b):
    a = _wrap(a, b) if not isinstance(a, Tensor) else a
    b = _wrap(b, a)

    def vjp(g, needs):
        ga = _unbroadcast(g / b, a.shape) if needs[0] else None
        gb = _unbroadcast(-(g * a) / (b * b), b.shape) if needs[1] else None
        return ga, gb

    return _record(a.data / b.data, (a, b), vjp)


def neg(a):
    def vjp(g, needs):
        return (-g,)

    return _record(-a.data, (a,), vjp)


# -- nonlinearities -----------------------------------------------------------


def exp(x):
    out_ref = []

    def vjp(g, needs):
        return (g * out_ref[0],)

    out = _record(np.exp(x.data), (x,), vjp)
    out_ref.append(out)
    return out


def log(x):
    def vjp(g, needs):
        return (g / x,)

    return _record(np.log(x.data), (x,), vjp)


def tanh(x):
    out_ref = []

    def vjp(g, needs):
        y = out_ref[0]
        return (g * (1.0 - y * y),)

    out = _record(np.tanh(x.data), (x,), vjp)
    out_ref.append(out)
    return out


def sigmoid(x):
    out_ref = []

    def vjp(g, needs):
        s = out_ref[0]
        return (g * (s * (1.0 - s)),)

    d = x.data
    out = _record(np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                           np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d)))).astype(d.dtype),
                  (x,), vjp)
    out_ref.append(out)
    return out


def softplus(x):
    """log(1 + e^x), computed stably."""

    def vjp(g, needs):
        return (g * sigmoid(x),)

    d = x.data
    val = np.maximum(d, 0) + np.log1p(np.exp(-np.abs(d)))
    return _record(val.astype(d.dtype), (x,), vjp)


def leaky_relu(x, slope=0.2):
    d = x.data

    def vjp(g, needs):
        mask = np.where(d > 0, d.dtype.type(1), d.dtype.type(slope))
        return (g * Tensor(mask),)

    return _record(np.where(d > 0, d, d * d.dtype.type(slope)), (x,), vjp)


def log_softmax(x, axis=1):
    """Log of the softmax along `axis`, stable via max subtraction."""
    d = x.data
    m = d.max(axis=axis, keepdims=True)
    z = d - m
    lse = np.log(np.sum(np.exp(z), axis=axis, keepdims=True))
    out_ref = []

    def vjp(g, needs):
        y = out_ref[0]
        return (g - exp(y) * tsum(g, axis=axis, keepdims=True),)

    out = _record(z - lse, (x,), vjp)
    out_ref.append(out)
    return out


def normalize_features(x, mode="batch", eps=1e-5):
    """Zero-mean unit-variance per channel of an N,C,H,W tensor.

    batch mode reduces over (N,H,W); instance mode over (H,W) per sample.
    Uses 1/sqrt(var + eps) with the population variance.
    """
    if x.ndim != 4:
        raise ValueError(f"normalize_features expects N,C,H,W input, got {x.shape}")
    if mode == "batch":
        axes = (0, 2, 3)
    elif mode == "instance":
        axes = (2, 3)
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    d = x.data
    mu = d.mean(axis=axes, keepdims=True)
    var = d.var(axis=axes, keepdims=True)
    r = 1.0 / np.sqrt(var + d.dtype.type(eps))
    out_ref = []

    def vjp(g, needs):
        y = out_ref[0]
        centered = g - tmean(g, axis=axes, keepdims=True)
        gx = (centered - y * tmean(g * y, axis=axes, keepdims=True)) * Tensor(r)
        return (gx,)

    out = _record((d - mu) * r, (x,), vjp)
    out_ref.append(out)
    return out


# -- shape ops ----------------------------------------------------------------


def reshape(x, shape):
    orig = x.shape

    def vjp(g, needs):
        return (reshape(g, orig),)

    return _record(x.data.reshape(shape), (x,), vjp)


def concat(tensors, axis=0):
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g, needs):
        return tuple(
            narrow(g, axis, int(offsets[i]), sizes[i]) if needs[i] else None
            for i in range(len(tensors)))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors, vjp)


def narrow(x, axis, start, length):
    """Slice `length` entries from `start` along `axis`."""
    n = x.shape[axis]
    if start < 0 or start + length > n:
        raise ValueError(f"narrow out of range: axis {axis} has {n}, asked [{start},{start + length})")
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)

    def vjp(g, needs):
        return (_pad_axis(g, axis, start, n - start - length),)

    return _record(x.data[tuple(idx)], (x,), vjp)


def _pad_axis(x, axis, before, after):
    pads = [(0, 0)] * x.ndim
    pads[axis] = (before, after)
    length = x.shape[axis]

    def vjp(g, needs):
        return (narrow(g, axis, before, length),)

    return _record(np.pad(x.data, pads), (x,), vjp)


# -- reductions ---------------------------------------------------------------


def tsum(x, axis=None, keepdims=False):
    if axis is None:
        axes = tuple(range(x.ndim))
    elif isinstance(axis, int):
        axes = (axis,)
    else:
        axes = tuple(axis)
    kshape = tuple(1 if i in axes else s for i, s in enumerate(x.shape))

    def vjp(g, needs):
        gk = g if keepdims or g.shape == kshape else reshape(g, kshape)
        return (gk * Tensor(np.ones(x.shape, x.dtype)),)

    return _record(x.data.sum(axis=axes, keepdims=keepdims), (x,), vjp)


def tmean(x, axis=None, keepdims=False):
    if axis is None:
        axes = tuple(range(x.ndim))
    elif isinstance(axis, int):
        axes = (axis,)
    else:
        axes = tuple(axis)
    count = 1
    for a in axes:
        count *= x.shape[a]
    return tsum(x, axis, keepdims) / float(count)


# -- convolution --------------------------------------------------------------


def _check_finite(arr, opname):
    if not np.isfinite(arr).all():
        raise FloatingPointError(f"{opname} produced non-finite values")


def _conv_out_size(n, k, stride, padding):
    return (n + 2 * padding - k) // stride + 1


_scratch_store = threading.local()


def _scratch(key, shape, dtype):
    """Grow-only reusable buffer; conv internals never escape, so reusing
    their storage avoids refaulting large allocations every call."""
    pool = getattr(_scratch_store, "pool", None)
    if pool is None:
        pool = _scratch_store.pool = {}
    count = 1
    for s in shape:
        count *= s
    need = count * np.dtype(dtype).itemsize
    buf = pool.get(key)
    if buf is None or buf.nbytes < need:
        buf = pool[key] = np.empty(need, np.uint8)
    return np.frombuffer(buf.data, dtype=dtype, count=count).reshape(shape)


def _nhwc_padded(x, padding, key):
    """Channel-last padded copy of an NCHW array, in scratch storage."""
    n, c, h, w = x.shape
    xq = _scratch(key, (n, h + 2 * padding, w + 2 * padding, c), x.dtype)
    if padding:
        xq.fill(0)
    xq[:, padding:padding + h, padding:padding + w, :] = x.transpose(0, 2, 3, 1)
    return xq


def _im2col(x, k, stride, padding, key):
    """Channel-last patch matrix (N*Ho*Wo, k*k*C), built from k*k fast
    slice copies instead of a strided 6-d gather."""
    n, c, h, w = x.shape
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    xq = _nhwc_padded(x, padding, key + "_xq")
    if k == 1 and stride == 1 and padding == 0:
        return xq.reshape(-1, c), n, ho, wo
    col = _scratch(key + "_col", (n, ho, wo, k, k, c), x.dtype)
    for u in range(k):
        for v in range(k):
            col[:, :, :, u, v, :] = xq[:, u:u + (ho - 1) * stride + 1:stride,
                                          v:v + (wo - 1) * stride + 1:stride, :]
    return col.reshape(-1, k * k * c), n, ho, wo


def _conv_fwd_np(x, w, stride, padding, key="conv"):
    cout, cin, k, _ = w.shape
    cm, n, ho, wo = _im2col(x, k, stride, padding, key)
    wmat = w.transpose(2, 3, 1, 0).reshape(k * k * cin, cout)
    out = _scratch(key + "_out", (cm.shape[0], cout), x.dtype)
    np.matmul(cm, wmat, out=out)
    return np.ascontiguousarray(out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))


def _conv_input_grad_np(g, w, stride, padding, in_h, in_w):
    n, cout, ho, wo = g.shape
    k = w.shape[2]
    off = k - 1 - padding
    z = _scratch("convz", (n, cout, in_h + k - 1, in_w + k - 1), g.dtype)
    z.fill(0)
    z[:, :, off:off + (ho - 1) * stride + 1:stride,
         off:off + (wo - 1) * stride + 1:stride] = g
    wf = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return _conv_fwd_np(z, wf, 1, 0, key="convig")


def _conv_weight_grad_np(x, g, stride, padding, k):
    cin = x.shape[1]
    cout = g.shape[1]
    cm, n, ho, wo = _im2col(x, k, stride, padding, "convwg")
    gq = _scratch("convwg_g", (n, ho, wo, cout), g.dtype)
    gq[:] = g.transpose(0, 2, 3, 1)
    gw = cm.T @ gq.reshape(-1, cout)
    return np.ascontiguousarray(gw.reshape(k, k, cin, cout).transpose(3, 2, 0, 1))


def _conv_validate(x, w, stride, padding):
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(f"conv2d expects 4-d input/weight, got {x.shape} and {w.shape}")
    k = w.shape[2]
    if k != w.shape[3] or k % 2 == 0:
        raise ValueError(f"conv2d kernel must be square with odd size, got {w.shape[2:]} ")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"conv2d channel mismatch: input has {x.shape[1]}, weight expects {w.shape[1]}")
    if padding > k - 1:
        raise ValueError(f"conv2d padding {padding} exceeds kernel-1 ({k - 1})")
    if x.shape[2] + 2 * padding < k or x.shape[3] + 2 * padding < k:
        raise ValueError(f"conv2d input {x.shape[2:]} too small for kernel {k} with padding {padding}")


def conv2d(x, w, b=None, stride=1, padding=0):
    """2-d cross-correlation: x (N,Cin,H,W) * w (Cout,Cin,k,k) [+ b (Cout,)]."""
    _conv_validate(x, w, stride, padding)
    data = _conv_fwd_np(x.data, w.data, stride, padding)
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ValueError(f"conv2d bias shape {b.shape} != ({w.shape[0]},)")
        data = data + b.data[None, :, None, None]
    _check_finite(data, "conv2d")
    in_h, in_w = x.shape[2], x.shape[3]
    k = w.shape[2]

    def vjp(g, needs):
        gx = _conv_input_grad(g, w, stride, padding, in_h, in_w) if needs[0] else None
        gw = _conv_weight_grad(x, g, stride, padding, k) if needs[1] else None
        gb = None
        if b is not None and needs[2]:
            gb = tsum(g, axis=(0, 2, 3))
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w) if b is None else (x, w, b)
    return _record(data, parents, vjp)


def _conv_input_grad(g, w, stride, padding, in_h, in_w):
    """Adjoint of conv2d in its input; differentiable in (g, w)."""
    data = _conv_input_grad_np(g.data, w.data, stride, padding, in_h, in_w)
    k = w.shape[2]

    def vjp(h, needs):
        hg = conv2d(h, w, None, stride, padding) if needs[0] else None
        hw = _conv_weight_grad(h, g, stride, padding, k) if needs[1] else None
        return (hg, hw)

    return _record(data, (g, w), vjp)


def _conv_weight_grad(x, g, stride, padding, k):
    """Adjoint of conv2d in its weight; differentiable in (x, g)."""
    data = _conv_weight_grad_np(x.data, g.data, stride, padding, k)
    in_h, in_w = x.shape[2], x.shape[3]

    def vjp(h, needs):
        hx = _conv_input_grad(g, h, stride, padding, in_h, in_w) if needs[0] else None
        hgrad = conv2d(x, h, None, stride, padding) if needs[1] else None
        return (hx, hgrad)

    return _record(data, (x, g), vjp)


# -- resampling ---------------------------------------------------------------


@lru_cache(maxsize=None)
def _resample_matrix(src, dst, mode, dtype_str):
    """Row-interpolation matrix (dst, src) for one spatial axis."""
    a = np.zeros((dst, src), dtype=np.dtype(dtype_str))
    scale = src / dst
    for i in range(dst):
        if mode == "bilinear":
            c = (i + 0.5) * scale - 0.5
            c = min(max(c, 0.0), src - 1.0)
            lo = int(np.floor(c))
            hi = min(lo + 1, src - 1)
            t = c - lo
            a[i, lo] += 1.0 - t
            a[i, hi] += t
        else:  # nearest: floor of the half-pixel mapping
            j = int(np.floor((i + 0.5) * scale))
            a[i, min(max(j, 0), src - 1)] = 1.0
    a.setflags(write=False)
    return a


def _resample(x, a_rows, a_cols):
    """out[n,c,p,q] = sum_{h,w} a_rows[p,h] a_cols[q,w] x[n,c,h,w]."""

    def vjp(g, needs):
        return (_resample(g, a_rows.T, a_cols.T),)

    t = np.tensordot(x.data, a_rows, axes=([2], [1]))   # N,C,W,P
    out = np.tensordot(t, a_cols, axes=([2], [1]))      # N,C,P,Q
    return _record(out, (x,), vjp)


def _resize(x, out_h, out_w, mode):
    if x.ndim != 4:
        raise ValueError(f"resize expects N,C,H,W input, got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize target must be >= 1, got {out_h}x{out_w}")
    h, w = x.shape[2], x.shape[3]
    dt = str(x.dtype)
    return _resample(x, _resample_matrix(h, out_h, mode, dt),
                     _resample_matrix(w, out_w, mode, dt))


def bilinear_resize(x, out_h, out_w):
    """Half-pixel-center bilinear resize with edge clamping."""
    if x.shape[2:] == (out_h, out_w):
        def vjp(g, needs):
            return (g,)
        return _record(x.data.copy(), (x,), vjp)
    return _resize(x, out_h, out_w, "bilinear")


def nearest_resize(x, out_h, out_w):
    """Nearest-source-pixel resize (floor of the half-pixel mapping)."""
    return _resize(x, out_h, out_w, "nearest")


# -- optimizer ----------------------------------------------------------------


class Adam:
    """Adam with bias correction over a named parameter set."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                raise ValueError(f"missing gradient for parameter {name!r}")
            g = p.grad.data
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
