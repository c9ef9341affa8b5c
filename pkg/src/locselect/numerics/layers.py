"""Network layers: dense, activations, batch norm, GRU, BiGRU, MSE loss.

GRU convention (pinned; reset-before-candidate, U-then-gate):

    r  = sigmoid(x W_r + h U_r + b_r)
    z  = sigmoid(x W_z + h U_z + b_z)
    n  = tanh(x W_n + r * (h U_n + b_un) + b_wn)
    h' = (1 - z) * n + z * h

Parameter dicts for a GRU direction use the keys
``w_r u_r b_r w_z u_z b_z w_n u_n b_un b_wn``.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, concat


def dense_forward(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x [N x Din] @ w [Din x Dout] + b [Dout], bias broadcast over rows."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"dense shape mismatch: x {x.data.shape} vs w {w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"dense bias shape {b.data.shape} does not match w {w.data.shape}")
    return x @ w + b


def activation(x: Tensor, kind: str) -> Tensor:
    x = as_tensor(x)
    if kind == "relu":
        return x.relu()
    if kind == "sigmoid":
        return x.sigmoid()
    if kind == "tanh":
        return x.tanh()
    raise ValueError(f"unknown activation {kind!r}")


class RunningStats:
    """Mutable running mean/variance buffers for one batch-norm layer."""

    def __init__(self, mean: np.ndarray, var: np.ndarray):
        self.mean = mean
        self.var = var

    @classmethod
    def fresh(cls, dim: int) -> "RunningStats":
        return cls(np.zeros(dim), np.ones(dim))


def batchnorm_forward(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running: RunningStats,
    mode: str,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-feature normalization over the rows of x [N x D].

    Train mode uses biased batch statistics and updates the running buffers
    in place (new = momentum * old + (1 - momentum) * batch). Eval mode
    normalizes with the running buffers.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim != 2:
        raise ShapeError(f"batchnorm expects [N x D], got {x.data.shape}")
    n, d = x.data.shape
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ShapeError(f"batchnorm gamma/beta must be [{d}]")
    if mode == "train":
        if n < 2:
            raise ValueError("batchnorm train mode needs at least 2 rows (variance undefined)")
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        running.mean[:] = momentum * running.mean + (1.0 - momentum) * mu
        running.var[:] = momentum * running.var + (1.0 - momentum) * var
    elif mode == "eval":
        mu = running.mean
        var = running.var
    else:
        raise ValueError(f"batchnorm mode must be train or eval, got {mode!r}")
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = gamma.data * xhat + beta.data

    def bw(g):
        if gamma.requires_grad:
            gamma._acc((g * xhat).sum(axis=0))
        if beta.requires_grad:
            beta._acc(g.sum(axis=0))
        if x.requires_grad:
            if mode == "train":
                gm = g.mean(axis=0)
                gxm = (g * xhat).mean(axis=0)
                x._acc(gamma.data * inv * (g - gm - xhat * gxm))
            else:
                x._acc(g * gamma.data * inv)

    return Tensor._result(out_data, (x, gamma, beta), bw)


def _lift(t: Tensor) -> tuple[Tensor, bool]:
    if t.data.ndim == 1:
        return t.reshape(1, t.data.shape[0]), True
    return t, False


def gru_cell(x: Tensor, h: Tensor, params: dict[str, Tensor]) -> Tensor:
    """One GRU step. x [D] or [B x D]; h [H] or [B x H]; returns same rank as h."""
    x, lifted_x = _lift(as_tensor(x))
    h, lifted_h = _lift(as_tensor(h))
    if lifted_x != lifted_h:
        raise ShapeError("gru_cell: x and h must both be vectors or both be batched")
    p = params
    if x.data.shape[1] != p["w_r"].data.shape[0] or h.data.shape[1] != p["u_r"].data.shape[0]:
        raise ShapeError(
            f"gru_cell shape mismatch: x {x.data.shape}, h {h.data.shape}, "
            f"w_r {p['w_r'].data.shape}, u_r {p['u_r'].data.shape}"
        )
    r = (x @ p["w_r"] + h @ p["u_r"] + p["b_r"]).sigmoid()
    z = (x @ p["w_z"] + h @ p["u_z"] + p["b_z"]).sigmoid()
    n = (x @ p["w_n"] + r * (h @ p["u_n"] + p["b_un"]) + p["b_wn"]).tanh()
    out = (1.0 - z) * n + z * h
    return out.reshape(out.data.shape[1]) if lifted_h else out


def bigru_forward_batch(
    seq: Tensor, params_fwd: dict[str, Tensor], params_bwd: dict[str, Tensor]
) -> Tensor:
    """Bidirectional GRU over seq [B x T x D] -> [B x T x 2H], zero initial states."""
    seq = as_tensor(seq)
    if seq.data.ndim != 3:
        raise ShapeError(f"bigru_forward_batch expects [B x T x D], got {seq.data.shape}")
    b, t_len, d = seq.data.shape
    if t_len < 1:
        raise ValueError("bigru on an empty sequence")
    hidden = params_fwd["u_r"].data.shape[0]
    steps = [seq.narrow(1, t, 1).reshape(b, d) for t in range(t_len)]

    def run(params: dict[str, Tensor], order: range) -> list[Tensor]:
        h = Tensor(np.zeros((b, params["u_r"].data.shape[0])))
        outs: list[Tensor | None] = [None] * t_len
        for t in order:
            h = gru_cell(steps[t], h, params)
            outs[t] = h
        return outs  # type: ignore[return-value]

    fwd = run(params_fwd, range(t_len))
    bwd = run(params_bwd, range(t_len - 1, -1, -1))
    fwd_seq = concat([o.reshape(b, 1, hidden) for o in fwd], axis=1)
    bwd_seq = concat([o.reshape(b, 1, hidden) for o in bwd], axis=1)
    return concat([fwd_seq, bwd_seq], axis=2)


def bigru_forward(
    seq: Tensor, params_fwd: dict[str, Tensor], params_bwd: dict[str, Tensor]
) -> Tensor:
    """Bidirectional GRU over seq [T x D] -> [T x 2H], zero initial states."""
    seq = as_tensor(seq)
    if seq.data.ndim != 2:
        raise ShapeError(f"bigru_forward expects [T x D], got {seq.data.shape}")
    t_len, d = seq.data.shape
    if t_len < 1:
        raise ValueError("bigru on an empty sequence")
    out = bigru_forward_batch(seq.reshape(1, t_len, d), params_fwd, params_bwd)
    return out.reshape(t_len, out.data.shape[2])


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Sum of squared differences over all entries (summed, not averaged)."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.data.shape != target.data.shape:
        raise ShapeError(f"mse shape mismatch: {pred.data.shape} vs {target.data.shape}")
    diff = pred - target
    return (diff * diff).sum()


def init_gru_params(store, prefix: str, d_in: int, hidden: int) -> None:
    """Create one GRU direction's parameters under ``prefix.``."""
    for gate in ("r", "z", "n"):
        store.add(f"{prefix}.w_{gate}", (d_in, hidden), fan_in=d_in)
        store.add(f"{prefix}.u_{gate}", (hidden, hidden), fan_in=hidden)
    for bias in ("b_r", "b_z", "b_un", "b_wn"):
        store.add(f"{prefix}.{bias}", (hidden,), fan_in=hidden)
