"""Adam optimizer over a ParamStore (bias-corrected, gradients zeroed per step)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamStore


@dataclass
class AdamState:
    """First/second moments mirroring the store, plus the step counter."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, store: ParamStore, lr: float = 1e-4, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, tensor in store.items():
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        return state

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"m.{n}": a for n, a in sorted(self.m.items())}
        out.update({f"v.{n}": a for n, a in sorted(self.v.items())})
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], hyper: dict) -> "AdamState":
        state = cls(lr=hyper["lr"], beta1=hyper["beta1"], beta2=hyper["beta2"],
                    eps=hyper["eps"], t=int(hyper["t"]))
        for name, arr in arrays.items():
            if name.startswith("m."):
                state.m[name[2:]] = arr.copy()
            elif name.startswith("v."):
                state.v[name[2:]] = arr.copy()
        return state

    def hyper(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "t": self.t}


def adam_step(store: ParamStore, state: AdamState) -> None:
    """Apply one bias-corrected Adam update in place; zero gradients after."""
    if state.t >= np.iinfo(np.int64).max - 1:
        raise OverflowError("adam step counter overflow")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for name, tensor in store.items():
        g = tensor.grad
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        tensor.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    store.zero_grads()
