"""
Reverse-mode automatic differentiation over numpy arrays.

A graph of :class:`Tensor` nodes is built eagerly while the forward pass
runs; :func:`backward` walks it once in reverse topological order. Graphs
are rebuilt every step, nothing persists between calls.
"""

import numpy as np

from .. import _kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "name")

    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, parents=(), vjp=None, name=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._vjp = vjp
        self.name = name

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value)
    if dtype is not None and arr.dtype != dtype:
        arr = arr.astype(dtype)
    return Tensor(arr)


def _coerce(a, b):
    """Wrap raw operands, matching python scalars to the tensor dtype."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return a, b


def _node(data, parents, vjp):
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=parents, vjp=vjp)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b):
    a, b = _coerce(a, b)
    sa, sb = a.shape, b.shape
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = _coerce(a, b)
    sa, sb = a.shape, b.shape
    return _node(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = _coerce(a, b)
    ad, bd = a.data, b.data
    return _node(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def div(a, b):
    a, b = _coerce(a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)),
    )


def square(x):
    xd = x.data
    return _node(xd * xd, (x,), lambda g: (2.0 * xd * g,))


def tabs(x):
    xd = x.data
    return _node(np.abs(xd), (x,), lambda g: (np.sign(xd) * g,))


def exp(x):
    out = np.exp(x.data)
    return _node(out, (x,), lambda g: (g * out,))


def sin(x):
    xd = x.data
    return _node(np.sin(xd), (x,), lambda g: (g * np.cos(xd),))


def cos(x):
    xd = x.data
    return _node(np.cos(xd), (x,), lambda g: (-g * np.sin(xd),))


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def relu(x):
    out = np.maximum(x.data, 0)
    return _node(out, (x,), lambda g: (np.multiply(g, out > 0, dtype=g.dtype),))


def _sigmoid(xd):
    # split branches so that exp never overflows
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    e = np.exp(xd[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x):
    out = _sigmoid(np.asarray(x.data))
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),))


def softplus(x):
    xd = x.data
    out = np.maximum(xd, 0) + np.log1p(np.exp(-np.abs(xd)))
    return _node(out, (x,), lambda g: (g * _sigmoid(xd),))


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b):
    a, b = _coerce(a, b)
    ad, bd = a.data, b.data

    def vjp(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = ad.T @ g if b.requires_grad else None
        return ga, gb

    return _node(ad @ bd, (a, b), vjp)


def linear(x, weight, bias=None):
    """``x @ weight + bias`` for ``x`` of shape (N, in) and ``weight`` (in, out)."""
    xd, wd = x.data, weight.data
    out = xd @ wd
    if bias is not None:
        out += bias.data
        parents = (x, weight, bias)
    else:
        parents = (x, weight)

    def vjp(g):
        gx = g @ wd.T if x.requires_grad else None
        gw = xd.T @ g if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    return _node(out, parents, vjp)


# ---------------------------------------------------------------------------
# reductions and shape manipulation
# ---------------------------------------------------------------------------


def tsum(x, axis=None, keepdims=False):
    shape = x.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), vjp)


def mean(x, axis=None, keepdims=False):
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x, shape):
    old = x.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes=None):
    inv = None if axes is None else tuple(np.argsort(axes))
    return _node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), vjp)


def getitem(x, index):
    shape, dtype = x.shape, x.dtype

    def vjp(g):
        out = np.zeros(shape, dtype=dtype)
        np.add.at(out, index, g)
        return (out,)

    return _node(x.data[index], (x,), vjp)


def gather(x, index):
    """Row gather ``x[index]`` with an integer index vector."""
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]
    return _node(x.data[index], (x,), lambda g: (_kernels.scatter_add_rows(index, g, n),))


def repeat_rows(x, count):
    """Repeat each row of ``x`` ``count`` times consecutively (``np.repeat`` on axis 0)."""
    shape = x.shape

    def vjp(g):
        return (g.reshape((shape[0], count) + shape[1:]).sum(axis=1),)

    return _node(np.repeat(x.data, count, axis=0), (x,), vjp)


# ---------------------------------------------------------------------------
# convolution and pooling (NCHW)
# ---------------------------------------------------------------------------


def _im2col(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[:2]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # (N, C, Ho, Wo, kh, kw) -> (N, Ho, Wo, C, kh, kw)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2D cross-correlation. ``x`` (N,C,H,W), ``weight`` (O,C,kh,kw), ``bias`` (O,)."""
    xd, wd = x.data, weight.data
    n, c, h, w = xd.shape
    o, _, kh, kw = wd.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    wmat = wd.reshape(o, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gw = (gmat.T @ cols).reshape(wd.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (gmat @ wmat).reshape(n, ho, wo, c, kh, kw)
            gxp = np.zeros(xp.shape, dtype=xd.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        if bias is None:
            return gx, gw
        return gx, gw, gmat.sum(axis=0)

    return _node(np.ascontiguousarray(out), parents, vjp)


def global_avg_pool(x):
    """Mean over the spatial axes of an NCHW tensor, giving (N, C)."""
    return mean(x, axis=(2, 3))


# ---------------------------------------------------------------------------
# fused volume compositing
# ---------------------------------------------------------------------------


def composite(sigma, rgb, delta):
    """Alpha-composite ``R`` rays: sigma (R,K), rgb (R,K,3), delta (R,K) constant.

    Returns ``(rgb_out, weights, final_transmittance)``; only ``rgb_out`` is
    a differentiable tensor, the other two are plain arrays.
    """
    sd, cd = sigma.data, rgb.data
    dd = np.asarray(delta.data if isinstance(delta, Tensor) else delta, dtype=sd.dtype)
    out, weights, t_final = _kernels.composite_forward(sd, cd, dd)

    def vjp(g):
        return _kernels.composite_backward(sd, cd, dd, weights, np.ascontiguousarray(g))

    return _node(out, (sigma, rgb), vjp), weights, t_final


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def _topological_order(root):
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
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root, grad=None):
    """Accumulate d(root)/d(leaf) into ``.grad`` of every leaf that requires it.

    Interior nodes drop their gradient once propagated to keep memory flat.
    """
    if not root.requires_grad:
        return
    if grad is None:
        grad = np.ones_like(root.data)
    root.grad = np.asarray(grad, dtype=root.dtype)
    for node in reversed(_topological_order(root)):
        g = node.grad
        if node._vjp is None or g is None:
            continue
        parent_grads = node._vjp(g)
        handed = set()
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                # adopt freshly allocated gradients instead of copying them
                owned = (
                    isinstance(pg, np.ndarray)
                    and pg.base is None
                    and pg.flags.writeable
                    and pg.dtype == parent.dtype
                    and pg.shape == parent.shape
                    and id(pg) not in handed
                )
                parent.grad = pg if owned else np.array(pg, dtype=parent.dtype, copy=True).reshape(parent.shape)
                handed.add(id(pg))
            else:
                parent.grad += pg
        node.grad = None
        node._vjp = None
        node._parents = ()
