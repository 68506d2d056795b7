"""Dense-matrix compute core with reverse-mode automatic differentiation.

Just enough machinery for the two attention architectures used in this
project: 2-D matmul/dense ops, row-wise layer norm, inverted dropout,
masked softmax attention, and a handful of reductions and losses. Values
are stored as float64 and every reduction runs in a fixed order, so a
fixed seed gives bit-identical forward and backward results regardless
of how many worker processes sit above this module.

Masks follow one convention everywhere: a boolean vector aligned with the
rows of a matrix in which ``True`` marks a padded (excluded) row.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import (
    CorruptionError,
    DimensionError,
    EmptyAttentionError,
    FormatError,
)

# Toggled off only by benchmarks; tests and the training loop keep it on.
CHECK_FINITE = True

LAYER_NORM_EPS = 1e-5


def _as_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr


def _check(values: np.ndarray, op: str) -> np.ndarray:
    if CHECK_FINITE and not np.all(np.isfinite(values)):
        raise DimensionError(f"{op}: produced non-finite values")
    return values


class Tensor:
    """A node in the computation graph.

    ``grad`` is populated by :meth:`backward` on every tensor reachable from
    the output that has ``requires_grad`` set, accumulating in reverse
    topological order.
    """

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(
        self,
        values,
        requires_grad: bool = False,
        parents: tuple = (),
        backward_fn: Callable[[np.ndarray], None] | None = None,
    ):
        self.values = _as_array(values)
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad: np.ndarray | None = None
        self._parents = parents if self.requires_grad else ()
        self._backward_fn = backward_fn if self.requires_grad else None

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Run reverse-mode accumulation from this node.

        ``seed`` defaults to 1.0 and must match the value shape otherwise.
        """
        if seed is None:
            if self.values.ndim != 0 and self.values.size != 1:
                raise DimensionError("backward() without seed requires a scalar output")
            seed = np.ones_like(self.values)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accumulate(np.asarray(seed, dtype=np.float64))
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


# --------------------------------------------------------------------------
# primitive ops
# --------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_vals = _check(a.values @ b.values, "matmul")

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g @ b.values.T)
        if b.requires_grad:
            b._accumulate(a.values.T @ g)

    return Tensor(out_vals, parents=(a, b), backward_fn=backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also supports (n, d) + (d,) bias broadcasting."""
    av, bv = a.values, b.values
    if av.shape != bv.shape and not (av.ndim == 2 and bv.ndim == 1 and av.shape[1] == bv.shape[0]):
        raise DimensionError(f"add shape mismatch: {av.shape} + {bv.shape}")
    out_vals = _check(av + bv, "add")

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            if bv.shape == g.shape:
                b._accumulate(g)
            else:
                b._accumulate(g.sum(axis=0))

    return Tensor(out_vals, parents=(a, b), backward_fn=backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.values.shape != b.values.shape:
        raise DimensionError(f"sub shape mismatch: {a.shape} - {b.shape}")
    out_vals = _check(a.values - b.values, "sub")

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)

    return Tensor(out_vals, parents=(a, b), backward_fn=backward_fn)


def mul_const(x: Tensor, c) -> Tensor:
    """Multiply by a non-differentiable constant (scalar or ndarray)."""
    cv = np.asarray(c, dtype=np.float64)
    out_vals = _check(x.values * cv, "mul_const")

    def backward_fn(g: np.ndarray) -> None:
        x._accumulate(g * cv)

    return Tensor(out_vals, parents=(x,), backward_fn=backward_fn)


def relu(x: Tensor) -> Tensor:
    keep = x.values > 0.0
    out_vals = np.where(keep, x.values, 0.0)

    def backward_fn(g: np.ndarray) -> None:
        x._accumulate(g * keep)

    return Tensor(out_vals, parents=(x,), backward_fn=backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    v = x.values
    out_vals = np.empty_like(v)
    pos = v >= 0
    out_vals[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out_vals[~pos] = ev / (1.0 + ev)

    def backward_fn(g: np.ndarray) -> None:
        x._accumulate(g * out_vals * (1.0 - out_vals))

    return Tensor(out_vals, parents=(x,), backward_fn=backward_fn)


def abs_t(x: Tensor) -> Tensor:
    out_vals = np.abs(x.values)
    sign = np.sign(x.values)

    def backward_fn(g: np.ndarray) -> None:
        x._accumulate(g * sign)

    return Tensor(out_vals, parents=(x,), backward_fn=backward_fn)


def sum_all(x: Tensor) -> Tensor:
    out_vals = np.asarray(x.values.sum())

    def backward_fn(g: np.ndarray) -> None:
        x._accumulate(np.full_like(x.values, float(g)))

    return Tensor(out_vals, parents=(x,), backward_fn=backward_fn)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with bias broadcast over rows."""
    return add(matmul(x, w), b)


def layer_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None,
               eps: float = LAYER_NORM_EPS) -> Tensor:
    """Row-wise normalization over the last axis, optional affine.

    A constant row has zero variance and normalizes to zeros (the eps in
    the denominator makes 0/sqrt(eps) well defined).
    """
    v = x.values
    if v.ndim != 2:
        raise DimensionError(f"layer_norm expects a 2-D input, got {v.shape}")
    d = v.shape[1]
    mu = v.mean(axis=1, keepdims=True)
    centered = v - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out_vals = xhat
    if gamma is not None:
        out_vals = out_vals * gamma.values
    if beta is not None:
        out_vals = out_vals + beta.values
    _check(out_vals, "layer_norm")

    def backward_fn(g: np.ndarray) -> None:
        if beta is not None and beta.requires_grad:
            beta._accumulate(g.sum(axis=0))
        g_hat = g * gamma.values if gamma is not None else g
        if gamma is not None and gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=0))
        if x.requires_grad:
            # d xhat / dx for row-wise normalization
            s1 = g_hat.sum(axis=1, keepdims=True)
            s2 = (g_hat * xhat).sum(axis=1, keepdims=True)
            gx = inv_std * (g_hat - s1 / d - xhat * s2 / d)
            x._accumulate(gx)

    parents = tuple(t for t in (x, gamma, beta) if t is not None)
    return Tensor(out_vals, parents=parents, backward_fn=backward_fn)


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: scales survivors by 1/(1-rate) at train time.

    Eval mode is an exact identity (same Tensor values, no RNG consumed).
    """
    if not 0.0 <= rate < 1.0:
        raise DimensionError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        out_vals = x.values

        def backward_identity(g: np.ndarray) -> None:
            x._accumulate(g)

        return Tensor(out_vals, parents=(x,), backward_fn=backward_identity)
    if rng is None:
        raise DimensionError("dropout in train mode requires an RNG")
    keep = rng.random(x.values.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    mask = keep * scale
    out_vals = x.values * mask

    def backward_fn(g: np.ndarray) -> None:
        x._accumulate(g * mask)

    return Tensor(out_vals, parents=(x,), backward_fn=backward_fn)


def zero_rows(x: Tensor, row_mask: np.ndarray | None) -> Tensor:
    """Zero out rows where row_mask is True."""
    if row_mask is None:
        return x
    keep = (~np.asarray(row_mask, dtype=bool)).astype(np.float64)[:, None]
    return mul_const(x, keep)


def masked_softmax(scores: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
    """Row-wise softmax over unmasked key columns.

    ``key_mask[j] == True`` excludes column j (weight exactly zero).
    """
    v = scores.values
    if v.ndim != 2:
        raise DimensionError(f"masked_softmax expects 2-D scores, got {v.shape}")
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=bool)
        if key_mask.shape != (v.shape[1],):
            raise DimensionError("key mask length must match the number of key columns")
        if key_mask.all():
            raise EmptyAttentionError("all key positions are masked")
        work = np.where(key_mask[None, :], -np.inf, v)
    else:
        work = v
    row_max = work.max(axis=1, keepdims=True)
    e = np.exp(work - row_max)
    if key_mask is not None:
        e[:, key_mask] = 0.0
    denom = e.sum(axis=1, keepdims=True)
    p = e / denom

    def backward_fn(g: np.ndarray) -> None:
        inner = (g * p).sum(axis=1, keepdims=True)
        scores._accumulate(p * (g - inner))

    return Tensor(p, parents=(scores,), backward_fn=backward_fn)


def mean_rows(x: Tensor, row_mask: np.ndarray | None = None) -> Tensor:
    """Mean over unmasked rows, returned as a (1, d) tensor."""
    v = x.values
    if row_mask is None:
        valid = np.ones(v.shape[0], dtype=bool)
    else:
        valid = ~np.asarray(row_mask, dtype=bool)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise EmptyAttentionError("mean over zero unmasked rows")
    out_vals = v[valid].sum(axis=0, keepdims=True) / n_valid

    def backward_fn(g: np.ndarray) -> None:
        full = np.zeros_like(v)
        full[valid] = g / n_valid
        x._accumulate(full)

    return Tensor(out_vals, parents=(x,), backward_fn=backward_fn)


def bce_with_logits(logit: Tensor, target: float) -> Tensor:
    """Numerically stable binary cross-entropy on a scalar logit."""
    z = float(logit.values)
    y = float(target)
    loss = max(z, 0.0) - z * y + np.log1p(np.exp(-abs(z)))
    p = 1.0 / (1.0 + np.exp(-z)) if z >= 0 else np.exp(z) / (1.0 + np.exp(z))

    def backward_fn(g: np.ndarray) -> None:
        logit._accumulate(np.asarray(float(g) * (p - y)).reshape(logit.values.shape))

    return Tensor(np.asarray(loss), parents=(logit,), backward_fn=backward_fn)


def add_many(terms: Iterable[Tensor]) -> Tensor:
    """Left-to-right chained addition (fixed reduction order)."""
    terms = list(terms)
    if not terms:
        raise DimensionError("add_many of zero terms")
    acc = terms[0]
    for t in terms[1:]:
        acc = add(acc, t)
    return acc


# --------------------------------------------------------------------------
# attention
# --------------------------------------------------------------------------

@dataclass
class AttentionWeights:
    """Per-head projections stacked on the leading axis.

    wq/wk/wv have shape (heads, d_model, d_head) and wo (d_model, d_model);
    the head count must divide d_model evenly.
    """

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor

    @property
    def heads(self) -> int:
        return self.wq.values.shape[0]

    @property
    def d_model(self) -> int:
        return self.wq.values.shape[1]

    @property
    def d_head(self) -> int:
        return self.wq.values.shape[2]

    def validate(self) -> None:
        h, d, dh = self.wq.values.shape
        if d % h != 0 or dh != d // h:
            raise DimensionError(f"head count {h} must split d_model {d} evenly")
        for name, t in (("wk", self.wk), ("wv", self.wv)):
            if t.values.shape != (h, d, dh):
                raise DimensionError(f"{name} shape {t.values.shape} != {(h, d, dh)}")
        if self.wo.values.shape != (d, d):
            raise DimensionError(f"wo shape {self.wo.values.shape} != {(d, d)}")


MAX_SENTENCES = 256


def self_attention(x: Tensor, weights: AttentionWeights, mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention with parallel heads.

    Scores are scaled by 1/sqrt(d_head); masked key positions get weight
    zero and masked query rows come out as zero rows. All heads run as one
    batched node with a hand-derived backward: much cheaper than building
    the per-head graph op by op.
    """
    weights.validate()
    n, d = x.values.shape
    if n > MAX_SENTENCES:
        raise DimensionError(f"at most {MAX_SENTENCES} rows supported, got {n}")
    if d != weights.d_model:
        raise DimensionError(f"input width {d} != d_model {weights.d_model}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (n,):
            raise DimensionError("mask length must equal the number of rows")
        if mask.all():
            raise EmptyAttentionError("all rows are masked")
    heads, dh = weights.heads, weights.d_head
    scale = 1.0 / np.sqrt(dh)
    xv = x.values
    wq, wk, wv, wo = (weights.wq.values, weights.wk.values,
                      weights.wv.values, weights.wo.values)

    q = np.matmul(xv[None, :, :], wq)            # (H, n, dh)
    k = np.matmul(xv[None, :, :], wk)
    v = np.matmul(xv[None, :, :], wv)
    s = np.matmul(q, k.transpose(0, 2, 1)) * scale  # (H, n, n)
    if mask is not None:
        s[:, :, mask] = -np.inf
    s_max = s.max(axis=2, keepdims=True)
    p = np.exp(s - s_max)
    if mask is not None:
        p[:, :, mask] = 0.0
    p /= p.sum(axis=2, keepdims=True)
    ctx = np.matmul(p, v)                        # (H, n, dh)
    concat = np.ascontiguousarray(ctx.transpose(1, 0, 2)).reshape(n, heads * dh)
    out_vals = concat @ wo
    if mask is not None:
        out_vals[mask] = 0.0
    _check(out_vals, "self_attention")

    def backward_fn(g: np.ndarray) -> None:
        g_eff = g
        if mask is not None:
            g_eff = g.copy()
            g_eff[mask] = 0.0
        if weights.wo.requires_grad:
            weights.wo._accumulate(concat.T @ g_eff)
        dconcat = g_eff @ wo.T
        dctx = np.ascontiguousarray(dconcat.reshape(n, heads, dh).transpose(1, 0, 2))
        dp = np.matmul(dctx, v.transpose(0, 2, 1))
        dv = np.matmul(p.transpose(0, 2, 1), dctx)
        ds = p * (dp - (dp * p).sum(axis=2, keepdims=True))
        ds *= scale
        dq = np.matmul(ds, k)
        dk = np.matmul(ds.transpose(0, 2, 1), q)
        xt = xv.T[None, :, :]
        if weights.wq.requires_grad:
            weights.wq._accumulate(np.matmul(xt, dq))
        if weights.wk.requires_grad:
            weights.wk._accumulate(np.matmul(xt, dk))
        if weights.wv.requires_grad:
            weights.wv._accumulate(np.matmul(xt, dv))
        if x.requires_grad:
            dx = (np.matmul(dq, wq.transpose(0, 2, 1)).sum(axis=0)
                  + np.matmul(dk, wk.transpose(0, 2, 1)).sum(axis=0)
                  + np.matmul(dv, wv.transpose(0, 2, 1)).sum(axis=0))
            x._accumulate(dx)

    return Tensor(out_vals, parents=(x, weights.wq, weights.wk, weights.wv, weights.wo),
                  backward_fn=backward_fn)


def multi_head_block(x: Tensor, weights: AttentionWeights, mask: np.ndarray | None = None) -> Tensor:
    """Attention block with residual wiring: layer_norm(x + attention(x)).

    The block norm carries no affine parameters; the only learned norm in
    each branch sits at the branch input.
    """
    return layer_norm(add(x, self_attention(x, weights, mask)))


def self_attention_batch(x: Tensor, batch: int, length: int,
                         weights: AttentionWeights) -> Tensor:
    """Attention over a stack of ``batch`` documents of equal ``length``.

    ``x`` holds the documents stacked row-wise as a (batch*length, d)
    matrix with no padding rows; attention never crosses document
    boundaries. Mathematically identical to calling :func:`self_attention`
    per document, but the weight gradients collapse to one matmul per
    projection, which is what makes minibatch training affordable.
    """
    weights.validate()
    rows, d = x.values.shape
    if rows != batch * length:
        raise DimensionError(f"{rows} rows != batch {batch} x length {length}")
    if d != weights.d_model:
        raise DimensionError(f"input width {d} != d_model {weights.d_model}")
    heads, dh = weights.heads, weights.d_head
    scale = 1.0 / np.sqrt(dh)
    xv = x.values
    wq, wk, wv, wo = (weights.wq.values, weights.wk.values,
                      weights.wv.values, weights.wo.values)

    xb = xv.reshape(batch, 1, length, d)
    q = np.matmul(xb, wq[None])                    # (B, H, n, dh)
    k = np.matmul(xb, wk[None])
    v = np.matmul(xb, wv[None])
    s = np.matmul(q, k.transpose(0, 1, 3, 2)) * scale
    s_max = s.max(axis=3, keepdims=True)
    p = np.exp(s - s_max)
    p /= p.sum(axis=3, keepdims=True)
    ctx = np.matmul(p, v)                          # (B, H, n, dh)
    concat = np.ascontiguousarray(ctx.transpose(0, 2, 1, 3)).reshape(rows, heads * dh)
    out_vals = concat @ wo
    _check(out_vals, "self_attention_batch")

    def backward_fn(g: np.ndarray) -> None:
        if weights.wo.requires_grad:
            weights.wo._accumulate(concat.T @ g)
        dconcat = g @ wo.T
        dctx = np.ascontiguousarray(
            dconcat.reshape(batch, length, heads, dh).transpose(0, 2, 1, 3))
        dp = np.matmul(dctx, v.transpose(0, 1, 3, 2))
        dv = np.matmul(p.transpose(0, 1, 3, 2), dctx)
        ds = p * (dp - (dp * p).sum(axis=3, keepdims=True))
        ds *= scale
        dq = np.matmul(ds, k)
        dk = np.matmul(ds.transpose(0, 1, 3, 2), q)

        def flat_heads(t):
            # (B, H, n, dh) -> (H, B*n, dh)
            return np.ascontiguousarray(t.transpose(1, 0, 2, 3)).reshape(heads, rows, dh)

        dqf, dkf, dvf = flat_heads(dq), flat_heads(dk), flat_heads(dv)
        xt = xv.T[None]
        if weights.wq.requires_grad:
            weights.wq._accumulate(np.matmul(xt, dqf))
        if weights.wk.requires_grad:
            weights.wk._accumulate(np.matmul(xt, dkf))
        if weights.wv.requires_grad:
            weights.wv._accumulate(np.matmul(xt, dvf))
        if x.requires_grad:
            dx = (np.matmul(dqf, wq.transpose(0, 2, 1)).sum(axis=0)
                  + np.matmul(dkf, wk.transpose(0, 2, 1)).sum(axis=0)
                  + np.matmul(dvf, wv.transpose(0, 2, 1)).sum(axis=0))
            x._accumulate(dx)

    return Tensor(out_vals, parents=(x, weights.wq, weights.wk, weights.wv, weights.wo),
                  backward_fn=backward_fn)


def multi_head_block_batch(x: Tensor, batch: int, length: int,
                           weights: AttentionWeights) -> Tensor:
    return layer_norm(add(x, self_attention_batch(x, batch, length, weights)))


def mean_rows_grouped(x: Tensor, batch: int, length: int) -> Tensor:
    """Per-document mean over a (batch*length, d) stack -> (batch, d)."""
    rows, d = x.values.shape
    if rows != batch * length:
        raise DimensionError(f"{rows} rows != batch {batch} x length {length}")
    out_vals = x.values.reshape(batch, length, d).mean(axis=1)

    def backward_fn(g: np.ndarray) -> None:
        x._accumulate(np.repeat(g / length, length, axis=0))

    return Tensor(out_vals, parents=(x,), backward_fn=backward_fn)


def bce_with_logits_rows(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over a (B, 1) logit column."""
    z = logits.values[:, 0]
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise DimensionError(f"{logits.shape} logits vs {y.shape} targets")
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    p = np.empty_like(z)
    pos = z >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    p[~pos] = ez / (1.0 + ez)
    out_vals = np.asarray(loss.mean())

    def backward_fn(g: np.ndarray) -> None:
        logits._accumulate((float(g) * (p - y) / z.size)[:, None])

    return Tensor(out_vals, parents=(logits,), backward_fn=backward_fn)


def mean_all(x: Tensor) -> Tensor:
    out_vals = np.asarray(x.values.mean())

    def backward_fn(g: np.ndarray) -> None:
        x._accumulate(np.full_like(x.values, float(g) / x.values.size))

    return Tensor(out_vals, parents=(x,), backward_fn=backward_fn)


# --------------------------------------------------------------------------
# checkpoint file format
# --------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"FWTS0001"


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    """Write a named-tensor directory: little-endian, f32 payloads."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back as float64 arrays (exact f32 widening)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad checkpoint magic: {magic!r}")
        raw = fh.read(4)
        if len(raw) != 4:
            raise CorruptionError("truncated checkpoint header")
        (count,) = struct.unpack("<I", raw)
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            raw = fh.read(4)
            if len(raw) != 4:
                raise CorruptionError("truncated tensor name length")
            (nlen,) = struct.unpack("<I", raw)
            name = fh.read(nlen).decode("utf-8")
            raw = fh.read(1)
            if len(raw) != 1:
                raise CorruptionError(f"truncated rank for {name}")
            (rank,) = struct.unpack("<B", raw)
            dims = []
            for _ in range(rank):
                raw = fh.read(4)
                if len(raw) != 4:
                    raise CorruptionError(f"truncated dims for {name}")
                dims.append(struct.unpack("<I", raw)[0])
            n_items = int(np.prod(dims)) if dims else 1
            payload = fh.read(4 * n_items)
            if len(payload) != 4 * n_items:
                raise CorruptionError(f"truncated payload for {name}")
            arr = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
            out[name] = arr
        if fh.read(1):
            raise CorruptionError("trailing bytes after declared tensor count")
    return out
