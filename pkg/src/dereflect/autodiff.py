"""Minimal N-dimensional float32 tensor with reverse-mode automatic differentiation.

Every network, loss, and optimizer in this package is built on the ops in
this module: dilated 2-D convolution, affine maps, global average pooling,
nearest-neighbour upsampling, forward spatial differences, and a small set
of elementwise/reduction primitives.

The graph is dynamic: each op records its parent tensors and a closure that
routes the output gradient back to them. ``Tensor.backward()`` walks the
recorded graph once in reverse topological order, accumulating gradients
additively so a tensor consumed by several branches receives the sum of all
branch contributions.

All forward values and gradients are float32. Convolution is computed
directly as a sum over kernel taps (no FFT, no im2col); at the image sizes
this package targets, clarity and determinism win over raw speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor",
    "ConvSpec",
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "leaky_relu",
    "sigmoid",
    "log",
    "log_sigmoid",
    "mean",
    "abs_mean",
    "square_mean",
    "linear",
    "conv2d",
    "global_avg_pool",
    "upsample_nearest",
    "diff_h",
    "diff_v",
]


def _as_f32(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    # ascontiguousarray would promote 0-d scalars to 1-d; keep their shape
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    return arr


class Tensor:
    """A float32 array plus the bookkeeping needed for backpropagation.

    Attributes:
        data: the value, a C-contiguous float32 ndarray (shape () for scalars).
        requires_grad: whether gradients should flow to this tensor.
        grad: populated by backward(); same shape as data, or None.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f32(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> "Tensor":
        """A view of the same values, cut off from the graph."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate .grad for every reachable tensor with requires_grad.

        Only defined for scalar tensors. Gradients accumulate into any
        pre-existing .grad (call zero_grad between independent passes).
        """
        if self.data.shape != ():
            raise ValueError(
                f"backward() needs a scalar loss, got shape {self.data.shape}"
            )
        if not self.requires_grad:
            return

        # Iterative post-order DFS; recursion would overflow on deep graphs.
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        _accumulate(self, np.ones((), dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # operator sugar; scalars and arrays are promoted to constant tensors
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _wrap(data: np.ndarray) -> Tensor:
    # construct without the float32 cast; op forwards already produce arrays
    # in the dtype of their inputs (float64 only inside the FD test oracle)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.grad = None
    out._parents = ()
    out._backward_fn = None
    return out


def _result(out_data, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = _wrap(np.asarray(out_data))
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def _coerce(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _view_shapes(a: Tensor, b: Tensor) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Shapes under which a and b combine elementwise.

    Allowed pairings: identical shapes, scalar against anything, and
    per-channel (N, C) against (N, C, H, W) for attention-style scaling.
    """
    sa, sb = a.data.shape, b.data.shape
    if sa == sb or sa == () or sb == ():
        return sa, sb
    if len(sa) == 4 and len(sb) == 2 and sa[:2] == sb:
        return sa, sb + (1, 1)
    if len(sb) == 4 and len(sa) == 2 and sb[:2] == sa:
        return sa + (1, 1), sb
    raise ValueError(f"shapes {sa} and {sb} cannot be combined elementwise")


def _unbroadcast(g: np.ndarray, view_shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == view_shape:
        return g
    extra = g.ndim - len(view_shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(view_shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    va, vb = _view_shapes(a, b)
    out_data = a.data.reshape(va) + b.data.reshape(vb)

    def backward(g):
        _accumulate(a, _unbroadcast(g, va).reshape(a.data.shape))
        _accumulate(b, _unbroadcast(g, vb).reshape(b.data.shape))

    return _result(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    va, vb = _view_shapes(a, b)
    out_data = a.data.reshape(va) - b.data.reshape(vb)

    def backward(g):
        _accumulate(a, _unbroadcast(g, va).reshape(a.data.shape))
        _accumulate(b, -_unbroadcast(g, vb).reshape(b.data.shape))

    return _result(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    va, vb = _view_shapes(a, b)
    ad, bd = a.data.reshape(va), b.data.reshape(vb)
    out_data = ad * bd

    def backward(g):
        _accumulate(a, _unbroadcast(g * bd, va).reshape(a.data.shape))
        _accumulate(b, _unbroadcast(g * ad, vb).reshape(b.data.shape))

    return _result(out_data, (a, b), backward)


def scale(t: Tensor, factor: float) -> Tensor:
    """Multiply by a compile-time constant (no gradient to the factor)."""
    t = _coerce(t)
    factor = np.float32(factor)
    out_data = t.data * factor

    def backward(g):
        _accumulate(t, g * factor)

    return _result(out_data, (t,), backward)


def relu(t: Tensor) -> Tensor:
    t = _coerce(t)
    out_data = np.maximum(t.data, np.float32(0.0))

    def backward(g):
        _accumulate(t, g * (t.data > 0))

    return _result(out_data, (t,), backward)


def leaky_relu(t: Tensor, slope: float = 0.2) -> Tensor:
    t = _coerce(t)
    slope = np.float32(slope)
    out_data = np.where(t.data > 0, t.data, t.data * slope)

    def backward(g):
        _accumulate(t, g * np.where(t.data > 0, np.float32(1.0), slope))

    return _result(out_data, (t,), backward)


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    pos = x >= 0
    z = np.exp(-np.abs(x))
    return np.where(pos, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype)


def sigmoid(t: Tensor) -> Tensor:
    t = _coerce(t)
    s = _sigmoid_values(t.data)

    def backward(g):
        _accumulate(t, g * s * (1.0 - s))

    return _result(s, (t,), backward)


def log(t: Tensor) -> Tensor:
    t = _coerce(t)
    if np.any(t.data <= 0):
        raise ValueError("log requires strictly positive inputs")
    out_data = np.log(t.data)

    def backward(g):
        _accumulate(t, g / t.data)

    return _result(out_data, (t,), backward)


def log_sigmoid(t: Tensor) -> Tensor:
    """log(sigmoid(x)) in a form that cannot overflow for extreme x."""
    t = _coerce(t)
    x = t.data
    out_data = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))

    def backward(g):
        _accumulate(t, g * _sigmoid_values(-x))

    return _result(out_data, (t,), backward)


def mean(t: Tensor) -> Tensor:
    t = _coerce(t)
    n = t.data.size
    if n == 0:
        raise ValueError("mean of an empty tensor")
    out_data = t.data.mean()

    def backward(g):
        _accumulate(t, np.full_like(t.data, g / np.float32(n)))

    return _result(out_data, (t,), backward)


def abs_mean(t: Tensor) -> Tensor:
    t = _coerce(t)
    n = t.data.size
    if n == 0:
        raise ValueError("mean of an empty tensor")
    out_data = np.abs(t.data).mean()

    def backward(g):
        _accumulate(t, (g / np.float32(n)) * np.sign(t.data))

    return _result(out_data, (t,), backward)


def square_mean(t: Tensor) -> Tensor:
    t = _coerce(t)
    n = t.data.size
    if n == 0:
        raise ValueError("mean of an empty tensor")
    out_data = np.mean(t.data * t.data)

    def backward(g):
        _accumulate(t, (g * np.float32(2.0) / np.float32(n)) * t.data)

    return _result(out_data, (t,), backward)


def linear(t: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map (N, C_in) -> (N, C_out) with weights shaped (C_out, C_in)."""
    t, weights, bias = _coerce(t), _coerce(weights), _coerce(bias)
    if t.data.ndim != 2:
        raise ValueError(f"linear expects a 2-D input, got shape {t.data.shape}")
    if weights.data.ndim != 2 or weights.data.shape[1] != t.data.shape[1]:
        raise ValueError(
            f"weight shape {weights.data.shape} does not match input feature "
            f"dimension {t.data.shape[1]}"
        )
    if bias.data.shape != (weights.data.shape[0],):
        raise ValueError(
            f"bias shape {bias.data.shape} does not match output dimension "
            f"{weights.data.shape[0]}"
        )
    out_data = t.data @ weights.data.T + bias.data

    def backward(g):
        _accumulate(t, g @ weights.data)
        _accumulate(weights, g.T @ t.data)
        _accumulate(bias, g.sum(axis=0))

    return _result(out_data, (t, weights, bias), backward)


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one 2-D convolution.

    With stride 1 and padding = dilation*(kernel_size-1)/2 the output keeps
    the input's spatial dims.
    """

    kernel_size: int
    dilation: int = 1
    stride: int = 1
    padding: int = 0
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.dilation < 1:
            raise ValueError(f"dilation must be positive, got {self.dilation}")
        if self.stride < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")
        if self.padding < 0:
            raise ValueError(f"padding must be non-negative, got {self.padding}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        span = self.dilation * (self.kernel_size - 1) + 1
        oh = (h + 2 * self.padding - span) // self.stride + 1
        ow = (w + 2 * self.padding - span) // self.stride + 1
        return oh, ow


def conv2d(t: Tensor, weights: Tensor, bias: Tensor, spec: ConvSpec) -> Tensor:
    """Dilated 2-D convolution over NCHW input, zero-padded.

    weights: (out_channels, in_channels, k, k); bias: (out_channels,).
    Computed directly as a sum over the k*k kernel taps.
    """
    t, weights, bias = _coerce(t), _coerce(weights), _coerce(bias)
    if t.data.ndim != 4:
        raise ValueError(f"conv2d expects NCHW input, got shape {t.data.shape}")
    n, c, h, w = t.data.shape
    if c != spec.in_channels:
        raise ValueError(
            f"input has {c} channels but spec.in_channels is {spec.in_channels}"
        )
    k = spec.kernel_size
    expected_w = (spec.out_channels, spec.in_channels, k, k)
    if weights.data.shape != expected_w:
        raise ValueError(
            f"weight shape {weights.data.shape} does not match spec {expected_w}"
        )
    if bias.data.shape != (spec.out_channels,):
        raise ValueError(
            f"bias shape {bias.data.shape} does not match out_channels "
            f"{spec.out_channels}"
        )
    oh, ow = spec.out_size(h, w)
    if oh < 1 or ow < 1:
        raise ValueError(
            f"conv2d output would be empty for input {h}x{w} with {spec}"
        )

    p, d, s = spec.padding, spec.dilation, spec.stride
    if p:
        padded = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=t.data.dtype)
        padded[:, :, p : p + h, p : p + w] = t.data
    else:
        padded = t.data

    wdat = weights.data
    out_data = np.empty((n, spec.out_channels, oh, ow), dtype=t.data.dtype)
    out_data[:] = bias.data[None, :, None, None]
    windows = []
    for ky in range(k):
        for kx in range(k):
            win = padded[:, :, ky * d : ky * d + s * oh : s, kx * d : kx * d + s * ow : s]
            windows.append(win)
            # (out,in) x (N,in,oh,ow) -> (out,N,oh,ow)
            out_data += np.tensordot(wdat[:, :, ky, kx], win, axes=([1], [1])).transpose(
                1, 0, 2, 3
            )

    def backward(g):
        if weights.requires_grad:
            gw = np.empty_like(wdat)
            for ky in range(k):
                for kx in range(k):
                    win = windows[ky * k + kx]
                    gw[:, :, ky, kx] = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
            _accumulate(weights, gw)
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        if t.requires_grad:
            gpad = np.zeros_like(padded)
            for ky in range(k):
                for kx in range(k):
                    contrib = np.tensordot(
                        wdat[:, :, ky, kx], g, axes=([0], [1])
                    ).transpose(1, 0, 2, 3)
                    gpad[
                        :, :, ky * d : ky * d + s * oh : s, kx * d : kx * d + s * ow : s
                    ] += contrib
            _accumulate(t, gpad[:, :, p : p + h, p : p + w] if p else gpad)

    return _result(out_data, (t, weights, bias), backward)


def global_avg_pool(t: Tensor) -> Tensor:
    """Per-feature-map spatial mean: (N, C, H, W) -> (N, C)."""
    t = _coerce(t)
    if t.data.ndim != 4:
        raise ValueError(f"global_avg_pool expects NCHW input, got shape {t.data.shape}")
    n, c, h, w = t.data.shape
    if h < 1 or w < 1:
        raise ValueError("global_avg_pool needs non-empty spatial dims")
    out_data = t.data.mean(axis=(2, 3))

    def backward(g):
        _accumulate(
            t,
            np.broadcast_to(
                (g / np.float32(h * w))[:, :, None, None], t.data.shape
            ).astype(t.data.dtype),
        )

    return _result(out_data, (t,), backward)


def upsample_nearest(t: Tensor, factor: int = 2) -> Tensor:
    """Nearest-neighbour spatial upsampling of NCHW by an integer factor."""
    t = _coerce(t)
    if t.data.ndim != 4:
        raise ValueError(f"upsample_nearest expects NCHW input, got shape {t.data.shape}")
    if factor < 1:
        raise ValueError(f"factor must be positive, got {factor}")
    f = int(factor)
    out_data = t.data.repeat(f, axis=2).repeat(f, axis=3)

    def backward(g):
        n, c, h, w = t.data.shape
        _accumulate(t, g.reshape(n, c, h, f, w, f).sum(axis=(3, 5)))

    return _result(out_data, (t,), backward)


def diff_h(t: Tensor) -> Tensor:
    """Forward difference along the last (width) axis; length shrinks by 1."""
    t = _coerce(t)
    if t.data.ndim < 2 or t.data.shape[-1] < 2:
        raise ValueError(f"diff_h needs width >= 2, got shape {t.data.shape}")
    out_data = t.data[..., 1:] - t.data[..., :-1]

    def backward(g):
        gi = np.zeros_like(t.data)
        gi[..., 1:] += g
        gi[..., :-1] -= g
        _accumulate(t, gi)

    return _result(out_data, (t,), backward)


def diff_v(t: Tensor) -> Tensor:
    """Forward difference along the second-to-last (height) axis."""
    t = _coerce(t)
    if t.data.ndim < 2 or t.data.shape[-2] < 2:
        raise ValueError(f"diff_v needs height >= 2, got shape {t.data.shape}")
    out_data = t.data[..., 1:, :] - t.data[..., :-1, :]

    def backward(g):
        gi = np.zeros_like(t.data)
        gi[..., 1:, :] += g
        gi[..., :-1, :] -= g
        _accumulate(t, gi)

    return _result(out_data, (t,), backward)
