"""Dense float64 tensors with reverse-mode automatic differentiation.

The operation set is exactly what the forecaster needs: matmul, broadcast
add/mul, scalar scaling, trailing-axes transpose, slicing/concat along the
last axis, row softmax, layer norm, ReLU/GELU, reciprocal and the two
reductions (sum, mean-squared-error). Each op tapes a backward closure on
its output; ``backward`` runs a reverse topological sweep and then frees the
graph. ``grad_check`` is the module's own oracle: central finite differences
against the taped gradients.

Storage is row-major contiguous float64, rank 1-3. Transposes materialize.
A tensor built only from constants is itself constant and carries no graph
node, so data-only subgraphs cost no backward work.
"""

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import NumericError, ShapeError

__all__ = [
    "Tensor", "GradReport", "matmul", "add", "sub", "mul", "mul_scalar",
    "transpose_2d", "relu", "gelu", "softmax_rows", "layer_norm",
    "slice_last", "concat_last", "reciprocal", "reshape", "sum_all",
    "mse_reduce", "backward", "grad_check", "zero_grads",
]


class Tensor:
    """A dense array node. ``constant=True`` marks data that never needs
    gradient (inputs, targets, frozen statistics)."""

    __slots__ = ("data", "grad", "constant", "_parents", "_backward", "_op")

    def __init__(self, data, constant=False):
        arr = np.array(data, dtype=np.float64, order="C", copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if not 1 <= arr.ndim <= 3:
            raise ShapeError(f"tensor rank must be 1-3, got shape {arr.shape}")
        if arr.size == 0:
            raise ShapeError(f"tensor extents must be positive, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.constant = constant
        self._parents = ()
        self._backward = None
        self._op = ""

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if self.constant:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        tag = "const " if self.constant else ""
        op = f" op={self._op}" if self._op else ""
        return f"Tensor({tag}shape={self.data.shape}{op})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x, constant=True)


def _result(data, parents, op, make_backward):
    """Build an op output; all-constant inputs yield a node-free constant."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._op = op
    if all(p.constant for p in parents):
        out.constant = True
        out._parents = ()
        out._backward = None
    else:
        out.constant = False
        out._parents = tuple(parents)
        out._backward = make_backward(out)
    return out


def _reduce_to(g, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _swap(x):
    return np.swapaxes(x, -1, -2)


# ---------------------------------------------------------------------------
# ops


def matmul(a, b):
    """Matrix product; a leading batch axis on either side broadcasts."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs rank>=2 operands, got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: inner extents disagree: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def make(out):
        def bw():
            g = out.grad
            if not a.constant:
                a._accum(_reduce_to(np.matmul(g, _swap(b.data)), a.data.shape))
            if not b.constant:
                b._accum(_reduce_to(np.matmul(_swap(a.data), g), b.data.shape))
        return bw

    return _result(data, (a, b), "matmul", make)


def _broadcast_binary(a, b, op, fwd, da, db):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = fwd(a.data, b.data)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None

    def make(out):
        def bw():
            g = out.grad
            if not a.constant:
                a._accum(_reduce_to(da(g, a.data, b.data), a.data.shape))
            if not b.constant:
                b._accum(_reduce_to(db(g, a.data, b.data), b.data.shape))
        return bw

    return _result(data, (a, b), op, make)


def add(a, b):
    """Elementwise sum with numpy broadcasting (bias rows, per-sample stats)."""
    return _broadcast_binary(a, b, "add", np.add,
                             lambda g, x, y: g, lambda g, x, y: g)


def mul(a, b):
    """Elementwise product with numpy broadcasting."""
    return _broadcast_binary(a, b, "mul", np.multiply,
                             lambda g, x, y: g * y, lambda g, x, y: g * x)


def sub(a, b):
    return _broadcast_binary(a, b, "sub", np.subtract,
                             lambda g, x, y: g, lambda g, x, y: -g)


def mul_scalar(a, s):
    a = _as_tensor(a)
    s = float(s)
    data = a.data * s

    def make(out):
        def bw():
            a._accum(out.grad * s)
        return bw

    return _result(data, (a,), "mul_scalar", make)


def reciprocal(a):
    a = _as_tensor(a)
    data = 1.0 / a.data

    def make(out):
        def bw():
            a._accum(-out.grad * out.data * out.data)
        return bw

    return _result(data, (a,), "reciprocal", make)


def transpose_2d(a):
    """Swap the two trailing axes ("Permute(1,0)"); a leading batch axis is
    untouched. Output materializes contiguously."""
    a = _as_tensor(a)
    if a.data.ndim < 2:
        raise ShapeError(f"transpose_2d needs rank>=2, got {a.shape}")
    data = np.ascontiguousarray(_swap(a.data))

    def make(out):
        def bw():
            a._accum(np.ascontiguousarray(_swap(out.grad)))
        return bw

    return _result(data, (a,), "transpose_2d", make)


def relu(a):
    a = _as_tensor(a)
    shape = a.data.shape
    data = backend.K.relu_fwd(a.data.ravel()).reshape(shape)

    def make(out):
        def bw():
            a._accum(backend.K.relu_bwd(a.data.ravel(), out.grad.ravel()).reshape(shape))
        return bw

    return _result(data, (a,), "relu", make)


def gelu(a):
    """GELU with the tanh approximation."""
    a = _as_tensor(a)
    shape = a.data.shape
    data = backend.K.gelu_fwd(a.data.ravel()).reshape(shape)

    def make(out):
        def bw():
            a._accum(backend.K.gelu_bwd(a.data.ravel(), out.grad.ravel()).reshape(shape))
        return bw

    return _result(data, (a,), "gelu", make)


def softmax_rows(a):
    """Softmax over the last axis, max-subtracted for stability."""
    a = _as_tensor(a)
    if a.data.ndim < 2:
        raise ShapeError(f"softmax_rows needs rank>=2, got {a.shape}")
    shape = a.data.shape
    rows = a.data.reshape(-1, shape[-1])
    data = backend.K.softmax_fwd(rows).reshape(shape)

    def make(out):
        def bw():
            y = out.data.reshape(-1, shape[-1])
            gy = out.grad.reshape(-1, shape[-1])
            a._accum(backend.K.softmax_bwd(y, gy).reshape(shape))
        return bw

    return _result(data, (a,), "softmax_rows", make)


def layer_norm(a, gamma, beta, eps=1e-5):
    """Standardize each row over the last axis (population variance), then
    scale/shift by gamma/beta (both shape (d,))."""
    a, gamma, beta = _as_tensor(a), _as_tensor(gamma), _as_tensor(beta)
    if a.data.ndim < 2:
        raise ShapeError(f"layer_norm needs rank>=2, got {a.shape}")
    d = a.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ShapeError(
            f"layer_norm: gamma/beta must be ({d},), got {gamma.shape} and {beta.shape}")
    if eps <= 0:
        raise ValueError("layer_norm: eps must be positive")
    shape = a.data.shape
    rows = a.data.reshape(-1, d)
    y, mean, rstd = backend.K.layernorm_fwd(rows, gamma.data, beta.data, eps)

    def make(out):
        def bw():
            gy = out.grad.reshape(-1, d)
            gx, ggamma, gbeta = backend.K.layernorm_bwd(
                rows, gamma.data, mean, rstd, gy)
            if not a.constant:
                a._accum(gx.reshape(shape))
            if not gamma.constant:
                gamma._accum(ggamma)
            if not beta.constant:
                beta._accum(gbeta)
        return bw

    return _result(y.reshape(shape), (a, gamma, beta), "layer_norm", make)


def slice_last(a, start, stop):
    """Contiguous copy of a[..., start:stop]."""
    a = _as_tensor(a)
    if not 0 <= start < stop <= a.data.shape[-1]:
        raise ShapeError(f"slice_last[{start}:{stop}] out of range for {a.shape}")
    data = np.ascontiguousarray(a.data[..., start:stop])

    def make(out):
        def bw():
            g = np.zeros_like(a.data)
            g[..., start:stop] = out.grad
            a._accum(g)
        return bw

    return _result(data, (a,), "slice_last", make)


def concat_last(parts):
    """Concatenate along the last axis."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_last of zero tensors")
    data = np.concatenate([p.data for p in parts], axis=-1)
    widths = [p.data.shape[-1] for p in parts]

    def make(out):
        def bw():
            offset = 0
            for p, w in zip(parts, widths):
                if not p.constant:
                    p._accum(np.ascontiguousarray(out.grad[..., offset:offset + w]))
                offset += w
        return bw

    return _result(data, tuple(parts), "concat_last", make)


def reshape(a, shape):
    """Row-major reshape to a rank 1-3 shape of the same size."""
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.data.size or not 1 <= len(shape) <= 3:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    data = a.data.reshape(shape)

    def make(out):
        def bw():
            a._accum(out.grad.reshape(a.data.shape))
        return bw

    return _result(data, (a,), "reshape", make)


def sum_all(a):
    """Sum of every element, as a shape-(1,) tensor."""
    a = _as_tensor(a)
    data = np.array([a.data.sum()])

    def make(out):
        def bw():
            a._accum(np.full_like(a.data, out.grad[0]))
        return bw

    return _result(data, (a,), "sum_all", make)


def mse_reduce(pred, target):
    """Mean squared error over all elements, as a shape-(1,) tensor."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.data.shape != target.data.shape:
        raise ShapeError(f"mse_reduce: shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    data = np.array([float(np.mean(diff * diff))])

    def make(out):
        def bw():
            g = out.grad[0] * (2.0 / n) * diff
            if not pred.constant:
                pred._accum(g)
            if not target.constant:
                target._accum(-g)
        return bw

    return _result(data, (pred, target), "mse_reduce", make)


# ---------------------------------------------------------------------------
# backward pass and gradient checking


def backward(loss, free_graph=True):
    """Reverse-topological gradient accumulation from a scalar loss.

    Gradients add into ``.grad`` of every reachable non-constant tensor;
    repeated calls without ``zero_grads`` keep accumulating. With
    ``free_graph`` (default) the tape and intermediate gradients are dropped
    afterwards, leaving gradients only on leaf tensors (parameters).
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    topo = []
    visited = set()
    stack = [(loss, False)]
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

    loss._accum(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()

    if free_graph:
        for node in topo:
            if node._parents:
                node._parents = ()
                node._backward = None
                node.grad = None


def zero_grads(params):
    for t in (params.values() if isinstance(params, dict) else params):
        t.zero_grad()


@dataclass
class GradReport:
    """Analytic-vs-finite-difference comparison for a set of parameters."""

    tol: float
    max_rel_err: dict = field(default_factory=dict)
    checked_coords: dict = field(default_factory=dict)

    @property
    def worst(self):
        if not self.max_rel_err:
            return ("", 0.0)
        name = max(self.max_rel_err, key=self.max_rel_err.get)
        return (name, self.max_rel_err[name])

    @property
    def passed(self):
        return all(e < self.tol for e in self.max_rel_err.values())

    def __str__(self):
        name, err = self.worst
        status = "pass" if self.passed else "FAIL"
        return (f"GradReport({status}, tol={self.tol:g}, "
                f"worst={name!r} rel_err={err:.3e})")


def _rel_err(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(f, params, eps=1e-5, tol=1e-4, max_coords=None, seed=0):
    """Check taped gradients of ``f()`` (a scalar-Tensor closure over
    ``params``, a name->Tensor dict) against central finite differences.

    Every coordinate is probed unless ``max_coords`` caps it, in which case a
    deterministic subsample under ``seed`` is used. f must be deterministic.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"grad_check: eps must be in [1e-7, 1e-3], got {eps}")

    zero_grads(params)
    loss = f()
    if not np.isfinite(loss.item()):
        raise NumericError("grad_check: objective is not finite")
    backward(loss)
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }

    rng = np.random.default_rng(seed)
    report = GradReport(tol=tol)
    for name, t in params.items():
        flat = t.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        else:
            coords = range(flat.size)
        worst = 0.0
        n_checked = 0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            fp = f().item()
            flat[i] = orig - eps
            fm = f().item()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(
                    f"grad_check: objective not finite while probing {name}[{i}]")
            numeric = (fp - fm) / (2.0 * eps)
            worst = max(worst, _rel_err(a_flat[i], numeric))
            n_checked += 1
        report.max_rel_err[name] = worst
        report.checked_coords[name] = n_checked
    return report
