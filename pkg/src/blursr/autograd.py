"""Dense rank-4 tensors with reverse-mode differentiation.

Implements the small operator set the SR models need: conv2d (as
cross-correlation), leaky_relu, nearest-neighbor resize, elementwise
arithmetic, channel concat and mean reduction, each with a backward rule.
A central-finite-difference checker (`grad_check`) verifies every rule.

All production tensors hold float32 data; float64 is permitted internally
so the finite-difference harness can evaluate forwards without
cancellation noise.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericError

__all__ = [
    "Tensor",
    "tensor",
    "zeros",
    "full",
    "conv2d",
    "leaky_relu",
    "resize_nearest",
    "reduce_mean",
    "add",
    "sub",
    "mul",
    "absolute",
    "scale",
    "add_scalar",
    "concat_channels",
    "grad_check",
]


def _as_shape4(shape) -> tuple[int, int, int, int]:
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4 or any(s < 0 for s in shape):
        raise InvalidArgumentError(f"expected 4-tuple of non-negative extents, got {shape}")
    return shape


def _ensure_finite(data: np.ndarray, op: str) -> None:
    if data.size and not np.isfinite(data).all():
        raise NumericError(f"{op} produced non-finite values")


class Tensor:
    """A (N, C, H, W) array node in a reverse-mode computation graph.

    Data is immutable once the node participates in a graph; only `grad`
    accumulates. The trainer replaces leaf data between graph builds via
    `assign_`.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        arr = np.asarray(data, dtype=dtype)
        if arr.ndim != 4:
            raise InvalidArgumentError(f"tensor data must be rank 4, got rank {arr.ndim}")
        _as_shape4(arr.shape)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.size != 1:
            raise InvalidArgumentError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Leaf tensor sharing this data, cut off from the graph."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._backward = None
        out._op = "leaf"
        return out

    def assign_(self, data: np.ndarray) -> None:
        """Replace leaf data in place (trainer-owned, between graphs)."""
        if self._parents:
            raise InvalidArgumentError("assign_ is only valid on leaf tensors")
        arr = np.asarray(data, dtype=self.data.dtype)
        if arr.shape != self.data.shape:
            raise InvalidArgumentError(f"assign_ shape mismatch: {arr.shape} vs {self.data.shape}")
        self.data = arr

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g.astype(self.data.dtype, copy=False)

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        """Reverse-mode sweep from this node; accumulates into `.grad`."""
        if seed is None:
            if self.size != 1:
                raise InvalidArgumentError("backward() without seed requires a scalar output")
            seed = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.asarray(seed, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(_as_shape4(shape), dtype=dtype), requires_grad=requires_grad)


def full(shape, value: float, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    return Tensor(np.full(_as_shape4(shape), value, dtype=dtype), requires_grad=requires_grad)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    _ensure_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._parents = tuple(parents) if out.requires_grad else ()
    out._backward = backward if out.requires_grad else None
    out._op = op
    return out


# ---------------------------------------------------------------------------
# convolution


def _pad_hw(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _window_view(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )


def _conv_out_extent(ext: int, k: int, stride: int, padding: int, axis: str) -> int:
    span = ext + 2 * padding - k
    if span < 0:
        raise InvalidArgumentError(f"kernel {axis} extent {k} exceeds padded input extent {ext + 2 * padding}")
    if span % stride != 0:
        raise InvalidArgumentError(
            f"conv2d output {axis} extent is not exact: ({ext}+2*{padding}-{k}) not divisible by stride {stride}"
        )
    return span // stride + 1


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Strided 2-D cross-correlation with zero padding.

    `bias` is carried as a (1, Cout, 1, 1) tensor. Backward yields
    gradients for input, kernel and bias.
    """
    if stride < 1:
        raise InvalidArgumentError(f"stride must be positive, got {stride}")
    if padding < 0:
        raise InvalidArgumentError(f"padding must be non-negative, got {padding}")
    n, cin, h, w = x.shape
    cout, cink, kh, kw = kernel.shape
    if cink != cin:
        raise InvalidArgumentError(f"kernel expects {cink} input channels, input has {cin}")
    if bias.shape != (1, cout, 1, 1):
        raise InvalidArgumentError(f"bias shape must be (1,{cout},1,1), got {bias.shape}")
    ho = _conv_out_extent(h, kh, stride, padding, "height")
    wo = _conv_out_extent(w, kw, stride, padding, "width")

    xp = _pad_hw(x.data, padding)
    cols = _window_view(xp, kh, kw, stride, ho, wo).reshape(n, cin * kh * kw, ho * wo)
    w2 = kernel.data.reshape(cout, cin * kh * kw)
    out = np.matmul(w2[None], cols).reshape(n, cout, ho, wo) + bias.data

    def backward(g: np.ndarray) -> None:
        g2 = g.reshape(n, cout, ho * wo)
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)).reshape(1, cout, 1, 1))
        if kernel.requires_grad:
            gk = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0)
            kernel._accumulate(gk.reshape(kernel.shape))
        if x.requires_grad:
            dcols = np.matmul(w2.T[None], g2).reshape(n, cin, kh, kw, ho, wo)
            hp, wp = h + 2 * padding, w + 2 * padding
            dxp = np.zeros((n, cin, hp, wp), dtype=g.dtype)
            for u in range(kh):
                for v in range(kw):
                    dxp[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride] += dcols[:, :, u, v]
            if padding:
                dxp = dxp[:, :, padding : padding + h, padding : padding + w]
            x._accumulate(dxp)

    return _node(out, (x, kernel, bias), backward, "conv2d")


# ---------------------------------------------------------------------------
# pointwise and structural ops


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """max(v, slope*v); gradient is 1 for v>0 and slope for v<=0."""
    if not 0.0 <= slope < 1.0:
        raise InvalidArgumentError(f"slope must lie in [0,1), got {slope}")
    if x.size and not np.isfinite(x.data).all():
        raise NumericError("leaky_relu received non-finite input")
    out = np.maximum(x.data, x.data * slope)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * np.where(x.data > 0, 1.0, slope).astype(g.dtype))

    return _node(out, (x,), backward, "leaky_relu")


def resize_nearest(x: Tensor, factor: int, direction: str) -> Tensor:
    """Nearest-neighbor resize by an integer factor.

    `up` replicates each pixel factor x factor; `down` keeps the top-left
    sample of each block (extents must divide evenly).
    """
    if factor < 1:
        raise InvalidArgumentError(f"factor must be positive, got {factor}")
    if direction not in ("up", "down"):
        raise InvalidArgumentError(f"direction must be 'up' or 'down', got {direction!r}")
    n, c, h, w = x.shape
    if direction == "up":
        out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

        def backward_up(g: np.ndarray) -> None:
            if x.requires_grad:
                x._accumulate(g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)))

        return _node(out, (x,), backward_up, "resize_up")

    if h % factor or w % factor:
        raise InvalidArgumentError(f"extents ({h},{w}) not divisible by factor {factor}")
    out = np.ascontiguousarray(x.data[:, :, ::factor, ::factor])

    def backward_down(g: np.ndarray) -> None:
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[:, :, ::factor, ::factor] = g
            x._accumulate(gx)

    return _node(out, (x,), backward_down, "resize_down")


def reduce_mean(x: Tensor) -> Tensor:
    """Mean over all elements, returned as a (1,1,1,1) tensor."""
    if x.size == 0:
        raise InvalidArgumentError("reduce_mean of empty tensor")
    out = np.mean(x.data, dtype=x.data.dtype).reshape(1, 1, 1, 1)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g.reshape(()) / x.size, x.shape))

    return _node(out, (x,), backward, "reduce_mean")


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise InvalidArgumentError(f"{op} requires equal shapes, got {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _node(a.data + b.data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)

    return _node(a.data - b.data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _node(a.data * b.data, (a, b), backward, "mul")


def absolute(x: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * np.sign(x.data))

    return _node(np.abs(x.data), (x,), backward, "abs")


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * np.asarray(c, dtype=g.dtype))

    return _node(x.data * np.asarray(c, dtype=x.data.dtype), (x,), backward, "scale")


def add_scalar(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g)

    return _node(x.data + np.asarray(c, dtype=x.data.dtype), (x,), backward, "add_scalar")


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the channel axis; N, H, W must match."""
    na, ca, ha, wa = a.shape
    nb, cb, hb, wb = b.shape
    if (na, ha, wa) != (nb, hb, wb):
        raise InvalidArgumentError(f"concat_channels requires equal N,H,W, got {a.shape} vs {b.shape}")

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g[:, :ca])
        if b.requires_grad:
            b._accumulate(g[:, ca:])

    return _node(np.concatenate([a.data, b.data], axis=1), (a, b), backward, "concat_channels")


# ---------------------------------------------------------------------------
# finite-difference verification


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], epsilon: float = 1e-3) -> float:
    """Compare analytic gradients of `fn` against central differences.

    `fn` maps input tensors to a scalar tensor. Analytic gradients run on
    float32 tensors (the production path); the difference quotient is
    evaluated with float64 forwards to avoid cancellation. Returns the max
    over all input coordinates of
    |analytic - numeric| / max(1e-6, |analytic| + |numeric|).
    """
    total = sum(int(np.asarray(a).size) for a in inputs)
    if total > 512:
        raise InvalidArgumentError(f"grad_check inputs too large ({total} > 512 elements)")

    leaves = [Tensor(np.asarray(a, dtype=np.float32), requires_grad=True) for a in inputs]
    out = fn(*leaves)
    out.backward()

    base64 = [np.asarray(a, dtype=np.float64).copy() for a in inputs]

    def eval64() -> float:
        ts = [Tensor(b, dtype=np.float64) for b in base64]
        return fn(*ts).item()

    worst = 0.0
    for i, leaf in enumerate(leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        flat = base64[i].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            lo_hi = eval64()
            flat[j] = orig - epsilon
            lo_lo = eval64()
            flat[j] = orig
            numeric = (lo_hi - lo_lo) / (2.0 * epsilon)
            a_val = float(analytic.reshape(-1)[j])
            err = abs(a_val - numeric) / max(1e-6, abs(a_val) + abs(numeric))
            if err > worst:
                worst = err
    return worst


def grad_check_suite() -> list[tuple[str, Callable[..., Tensor], list[tuple[int, int, int, int]], bool]]:
    """(name, scalar-valued fn, input shapes, avoid-kink flag) per op.

    Scalar losses are built so every op's gradient path is non-trivial;
    piecewise-linear ops flag kink avoidance so callers can shift samples
    away from the non-differentiable points.
    """
    return [
        ("conv2d_s1p1", lambda x, k, b: reduce_mean(conv2d(x, k, b, 1, 1)),
         [(1, 2, 5, 5), (3, 2, 3, 3), (1, 3, 1, 1)], False),
        ("conv2d_s2p1", lambda x, k, b: reduce_mean(conv2d(x, k, b, 2, 1)),
         [(1, 2, 5, 5), (2, 2, 3, 3), (1, 2, 1, 1)], False),
        ("leaky_relu", lambda x: reduce_mean(leaky_relu(x, 0.2)), [(1, 2, 4, 4)], True),
        ("resize_up", lambda x: reduce_mean(mul(resize_nearest(x, 2, "up"), resize_nearest(x, 2, "up"))),
         [(1, 2, 3, 3)], False),
        ("resize_down", lambda x: reduce_mean(mul(resize_nearest(x, 2, "down"), resize_nearest(x, 2, "down"))),
         [(1, 2, 4, 4)], False),
        ("add", lambda a, b: reduce_mean(mul(add(a, b), add(a, b))), [(1, 2, 3, 3), (1, 2, 3, 3)], False),
        ("sub", lambda a, b: reduce_mean(mul(sub(a, b), sub(a, b))), [(1, 2, 3, 3), (1, 2, 3, 3)], False),
        ("mul", lambda a, b: reduce_mean(mul(a, b)), [(1, 2, 3, 3), (1, 2, 3, 3)], False),
        ("abs", lambda x: reduce_mean(absolute(x)), [(1, 2, 4, 4)], True),
        ("scale", lambda x: reduce_mean(scale(x, -2.5)), [(1, 2, 3, 3)], False),
        ("add_scalar", lambda x: reduce_mean(mul(add_scalar(x, 1.5), add_scalar(x, 1.5))), [(1, 2, 3, 3)], False),
        ("concat", lambda a, b: reduce_mean(mul(concat_channels(a, b), concat_channels(a, b))),
         [(1, 2, 3, 3), (1, 1, 3, 3)], False),
    ]


def run_grad_check_suite(seeds: int = 5, epsilon: float = 1e-3) -> dict[str, float]:
    """Worst relative error per op over the given number of random seeds."""
    results: dict[str, float] = {}
    for name, fn, shapes, avoid_kink in grad_check_suite():
        worst = 0.0
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            inputs = [rng.standard_normal(s) for s in shapes]
            if avoid_kink:
                inputs = [np.where(np.abs(a) > 0.1, a, a + 0.5) for a in inputs]
            worst = max(worst, grad_check(fn, inputs, epsilon=epsilon))
        results[name] = worst
    return results
