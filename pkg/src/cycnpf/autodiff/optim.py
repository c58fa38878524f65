"""Adam with bias correction."""

from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)


def init_adam_state(params) -> dict:
    return {
        "step": 0,
        "nonfinite_skips": 0,
        "m": {k: np.zeros_like(v.data) for k, v in params.items()},
        "v": {k: np.zeros_like(v.data) for k, v in params.items()},
    }


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, eps_overrides=None):
    """Update ``params`` (name -> Tensor) in place from ``grads`` (name -> array).

    If any gradient is non-finite the whole update is skipped and
    ``state["nonfinite_skips"]`` is incremented; the step counter is left as is.
    ``eps_overrides`` maps parameter names to a per-parameter epsilon.
    Returns ``True`` when the update was applied.
    """
    for name, g in grads.items():
        if params[name].shape != g.shape or state["m"][name].shape != g.shape:
            raise ValueError(
                f"adam_step: {name}: param {params[name].shape}, grad {g.shape}, state {state['m'][name].shape}"
            )
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        state["nonfinite_skips"] += 1
        logger.warning("non-finite gradient, update skipped (%d so far)", state["nonfinite_skips"])
        return False
    state["step"] += 1
    t = state["step"]
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, g in grads.items():
        p = params[name]
        m = state["m"][name]
        v = state["v"][name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        e = eps if eps_overrides is None else eps_overrides.get(name, eps)
        update = lr * (m / c1) / (np.sqrt(v / c2) + e)
        p.data = (p.data - update).astype(p.data.dtype)
    return True


class Adam:
    """Stateful wrapper around :func:`adam_step` for one parameter registry."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, eps_overrides=None):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.eps_overrides = eps_overrides
        self.state = init_adam_state(params)

    def step(self, grads) -> bool:
        return adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps,
                         self.eps_overrides)
