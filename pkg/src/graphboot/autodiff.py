"""Reverse-mode automatic differentiation over dense float64 matrices.

Every value is a 2-d matrix; scalars are 1x1. Operations executed while a
Tape is active record backward closures in execution order (a Wengert
list); backward() replays them in reverse, accumulating gradients
additively at fan-out points. The tape is rebuilt on every forward pass.

The operation set is exactly what the graph encoder, the predictor and
the bootstrapped losses need. Sparse matrices enter only as constants on
the left of spmm: gradients flow through the dense operand alone.
"""

from __future__ import annotations

import numpy as np

EPS_NORM = 1e-12

_ACTIVE_TAPES: list["Tape"] = []


class Tensor:
    """Dense float64 matrix plus gradient bookkeeping.

    Leaves are created directly (parameters with requires_grad=True,
    constants without). Non-leaves come out of the ops below; their
    requires_grad is set when the op is recorded on an active tape.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ValueError(f"tensors are 2-d matrices, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ValueError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of operations for one forward pass.

    Use as a context manager; ops record themselves onto the innermost
    active tape when any input requires gradients.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPES.pop()

    def __len__(self) -> int:
        return len(self._records)

    def _push(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
        out.requires_grad = True
        out.tape = self
        self._records.append((out, inputs, backward_fn))

    def _run_backward(self, t: Tensor) -> dict[Tensor, np.ndarray]:
        produced = set()
        for out, inputs, _ in self._records:
            out.grad = None
            produced.add(id(out))
            for inp in inputs:
                inp.grad = None
        t.grad = np.ones((1, 1))
        for out, _, backward_fn in reversed(self._records):
            if out.grad is None:
                continue  # not on any path to t
            backward_fn(out.grad)
        grads: dict[Tensor, np.ndarray] = {}
        for _, inputs, _ in self._records:
            for inp in inputs:
                if inp.requires_grad and id(inp) not in produced and inp.grad is not None:
                    grads[inp] = inp.grad
        return grads


def _active_tape() -> Tape | None:
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    # copy on first write: g may alias an upstream gradient buffer
    t.grad = np.array(g) if t.grad is None else t.grad + g


def _maybe_record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
    tape = _active_tape()
    if tape is not None and any(i.requires_grad for i in inputs):
        tape._push(out, inputs, backward_fn)


def backward(t: Tensor) -> dict[Tensor, np.ndarray]:
    """Gradients of the scalar t with respect to every requires_grad leaf.

    Also left on each leaf's .grad. t must have been produced under an
    active Tape.
    """
    if t.shape != (1, 1):
        raise ValueError(f"backward needs a scalar (1x1) tensor, got {t.shape}")
    if t.tape is None:
        raise ValueError("tensor was not produced under an active Tape")
    return t.tape._run_backward(t)


def detach(t: Tensor) -> Tensor:
    """Copy of t cut out of the graph; values are bit-identical."""
    return Tensor(t.data.copy(), requires_grad=False)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    out = Tensor(a.data @ b.data)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    _maybe_record(out, (a, b), bw)
    return out


def spmm(s, d: Tensor) -> Tensor:
    """Sparse (constant) times dense; gradient flows through d only."""
    if s.shape[1] != d.shape[0]:
        raise ValueError(f"spmm: shape mismatch {s.shape} vs {d.shape}")
    out = Tensor(s @ d.data)

    def bw(g):
        if d.requires_grad:
            _accumulate(d, s.transpose() @ g)

    _maybe_record(out, (d,), bw)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, g)

    _maybe_record(out, (a, b), bw)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    _check_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)

    _maybe_record(out, (a, b), bw)
    return out


def add_bias(a: Tensor, b: Tensor) -> Tensor:
    """Add a 1 x d row vector to every row of a."""
    if b.shape[0] != 1 or b.shape[1] != a.shape[1]:
        raise ValueError(f"add_bias: shape mismatch {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, g.sum(axis=0, keepdims=True))

    _maybe_record(out, (a, b), bw)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python float constant."""
    c = float(c)
    out = Tensor(a.data * c)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * c)

    _maybe_record(out, (a,), bw)
    return out


def sum_all(a: Tensor) -> Tensor:
    """Sum of all entries, as a 1x1 tensor."""
    out = Tensor(np.array([[a.data.sum()]]))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, np.full(a.shape, g[0, 0]))

    _maybe_record(out, (a,), bw)
    return out


def prelu(a: Tensor, slope: Tensor) -> Tensor:
    """Elementwise PReLU with one learnable scalar slope (1x1 tensor)."""
    if slope.shape != (1, 1):
        raise ValueError(f"prelu: slope must be 1x1, got {slope.shape}")
    s = slope.data[0, 0]
    pos = a.data > 0
    out = Tensor(np.where(pos, a.data, s * a.data))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * np.where(pos, 1.0, s))
        if slope.requires_grad:
            _accumulate(slope, np.array([[np.sum(g * a.data * ~pos)]]))

    _maybe_record(out, (a, slope), bw)
    return out


def row_l2_normalize(a: Tensor, eps: float = EPS_NORM) -> Tensor:
    """Scale each row to unit L2 norm; norms below eps are clamped to eps."""
    raw = np.linalg.norm(a.data, axis=1, keepdims=True)
    nrm = np.maximum(raw, eps)
    y = a.data / nrm
    out = Tensor(y)

    def bw(g):
        if not a.requires_grad:
            return
        live = raw > eps  # clamped rows have a constant denominator
        inner = np.sum(g * y, axis=1, keepdims=True)
        _accumulate(a, (g - np.where(live, y * inner, 0.0)) / nrm)

    _maybe_record(out, (a,), bw)
    return out


def row_cosine(a: Tensor, b: Tensor, pairs: tuple[np.ndarray, np.ndarray],
               eps: float = EPS_NORM) -> Tensor:
    """Cosine similarity of selected row pairs, as an m x 1 column.

    pairs = (ia, ib) index into the rows of a and b. Row norms are clamped
    below at eps. Stop-gradient on the target side is imposed by passing a
    detached b.
    """
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"row_cosine: shape mismatch {a.shape} vs {b.shape}")
    ia = np.asarray(pairs[0], dtype=np.int64)
    ib = np.asarray(pairs[1], dtype=np.int64)
    if ia.shape != ib.shape or ia.ndim != 1:
        raise ValueError("row_cosine: pair index arrays must be 1-d and equal length")
    if len(ia) and (ia.min() < 0 or ia.max() >= a.shape[0]):
        raise ValueError(f"row_cosine: left index out of range for {a.shape}")
    if len(ib) and (ib.min() < 0 or ib.max() >= b.shape[0]):
        raise ValueError(f"row_cosine: right index out of range for {b.shape}")

    u = a.data[ia]
    v = b.data[ib]
    nu_raw = np.linalg.norm(u, axis=1)
    nv_raw = np.linalg.norm(v, axis=1)
    nu = np.maximum(nu_raw, eps)
    nv = np.maximum(nv_raw, eps)
    dot = np.sum(u * v, axis=1)
    cos = dot / (nu * nv)
    out = Tensor(cos[:, None])

    def bw(g):
        gc = g[:, 0]
        if a.requires_grad:
            live = (nu_raw > eps).astype(np.float64)
            du = gc[:, None] * (v / (nu * nv)[:, None]
                                - (live * cos / nu ** 2)[:, None] * u)
            buf = np.zeros(a.shape)
            np.add.at(buf, ia, du)
            _accumulate(a, buf)
        if b.requires_grad:
            live = (nv_raw > eps).astype(np.float64)
            dv = gc[:, None] * (u / (nu * nv)[:, None]
                                - (live * cos / nv ** 2)[:, None] * v)
            buf = np.zeros(b.shape)
            np.add.at(buf, ib, dv)
            _accumulate(b, buf)

    _maybe_record(out, (a, b), bw)
    return out


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor,
              running_mean: np.ndarray, running_var: np.ndarray, *,
              train_mode: bool, momentum: float = 0.1, var_floor: float = 1e-5,
              update_running: bool | None = None) -> Tensor:
    """Batch normalization over the row (node) dimension.

    Train mode normalizes with batch statistics (biased variance, floored
    at var_floor) and, when update_running is true, folds them into the
    running buffers with the given momentum. Inference mode normalizes
    with the running buffers. gamma and beta are learnable 1 x d rows; the
    running buffers are plain arrays and never receive gradients.
    """
    d = x.shape[1]
    for name, t in (("gamma", gamma), ("beta", beta)):
        if t.shape != (1, d):
            raise ValueError(f"batchnorm: {name} has shape {t.shape}, expected (1, {d})")
    if update_running is None:
        update_running = train_mode

    if train_mode:
        mu = x.data.mean(axis=0, keepdims=True)
        var = x.data.var(axis=0, keepdims=True)
        if update_running:
            running_mean[:] = (1.0 - momentum) * running_mean + momentum * mu
            running_var[:] = (1.0 - momentum) * running_var + momentum * var
    else:
        mu = running_mean
        var = running_var
    s = np.maximum(var, var_floor)
    inv = 1.0 / np.sqrt(s)
    xhat = (x.data - mu) * inv
    out = Tensor(gamma.data * xhat + beta.data)

    def bw(g):
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=0, keepdims=True))
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=0, keepdims=True))
        if x.requires_grad:
            gi = g * gamma.data
            if train_mode:
                # columns at the variance floor lose the var-gradient path
                live = var > var_floor
                centered = gi - gi.mean(axis=0, keepdims=True)
                corr = np.where(live, xhat * (gi * xhat).mean(axis=0, keepdims=True), 0.0)
                _accumulate(x, inv * (centered - corr))
            else:
                _accumulate(x, gi * inv)

    _maybe_record(out, (x, gamma, beta), bw)
    return out


def segment_softmax(e: Tensor, seg_ptr: np.ndarray, tau: float) -> Tensor:
    """Softmax of e/tau within each contiguous segment of the m x 1 input.

    seg_ptr gives segment offsets (like a CSR indptr); empty segments are
    allowed and contribute nothing. Numerically stabilized by the
    per-segment maximum.
    """
    if e.shape[1] != 1:
        raise ValueError(f"segment_softmax: expected an m x 1 column, got {e.shape}")
    if tau <= 0:
        raise ValueError(f"segment_softmax: tau must be positive, got {tau}")
    seg_ptr = np.asarray(seg_ptr, dtype=np.int64)
    if seg_ptr[0] != 0 or seg_ptr[-1] != e.shape[0] or np.any(np.diff(seg_ptr) < 0):
        raise ValueError("segment_softmax: seg_ptr does not partition the input")

    seg_id = np.repeat(np.arange(len(seg_ptr) - 1), np.diff(seg_ptr))
    vals = e.data[:, 0] / tau
    w = np.empty_like(vals)
    nonempty = np.flatnonzero(np.diff(seg_ptr) > 0)
    if len(vals):
        mx = np.maximum.reduceat(vals, seg_ptr[nonempty])
        mx_full = np.empty(len(seg_ptr) - 1)
        mx_full[nonempty] = mx
        ex = np.exp(vals - mx_full[seg_id])
        denom = np.empty(len(seg_ptr) - 1)
        denom[nonempty] = np.add.reduceat(ex, seg_ptr[nonempty])
        w = ex / denom[seg_id]
    out = Tensor(w[:, None])

    def bw(g):
        if not e.requires_grad or not len(vals):
            return
        gw = g[:, 0] * w
        dots = np.empty(len(seg_ptr) - 1)
        dots[nonempty] = np.add.reduceat(gw, seg_ptr[nonempty])
        de = (gw - w * dots[seg_id]) / tau
        _accumulate(e, de[:, None])

    _maybe_record(out, (e,), bw)
    return out


def finite_diff_check(f, params: list[Tensor], h: float = 1e-5) -> float:
    """Largest relative disagreement between backward() and central
    finite differences of the scalar-valued f over every entry of params.

    f takes no arguments, reads the params, and must be deterministic and
    side-effect free. Relative error for a pair (analytic a, numeric n) is
    |a - n| / (|a| + |n| + 1e-12).
    """
    with Tape() as _:
        out = f()
    grads = backward(out)
    worst = 0.0
    for p in params:
        analytic = grads.get(p)
        if analytic is None:
            analytic = np.zeros(p.shape)
        it = np.nditer(p.data, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p.data[idx]
            p.data[idx] = orig + h
            fp = f().item()
            p.data[idx] = orig - h
            fm = f().item()
            p.data[idx] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = analytic[idx]
            rel = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
            worst = max(worst, rel)
    return worst
