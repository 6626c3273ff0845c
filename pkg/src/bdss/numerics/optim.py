"""Adam optimizer with bias-corrected moment estimates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigurationError


@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators and the step counter."""

    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    step_count: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(
            first_moment=[np.zeros_like(p.data) for p in params],
            second_moment=[np.zeros_like(p.data) for p in params],
        )


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply one Adam update in place and advance ``state.step_count``.

    ``grads`` entries may be ``None`` for parameters that received no
    gradient; those are treated as zero.
    """
    if lr <= 0:
        raise ConfigurationError(f"learning rate must be positive, got {lr}")
    if not (len(params) == len(grads) == len(state.first_moment) == len(state.second_moment)):
        raise ConfigurationError("params, grads and optimizer state differ in length")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        m, v = state.first_moment[i], state.second_moment[i]
        if m.shape != p.data.shape or v.shape != p.data.shape:
            raise ConfigurationError(
                f"optimizer state #{i} has shape {m.shape}, parameter has {p.data.shape}"
            )
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise ConfigurationError(
                f"gradient #{i} has shape {g.shape}, parameter has {p.data.shape}"
            )
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype, copy=False)
    return params, state


class Adam:
    """Stateful wrapper around :func:`adam_step` for a fixed parameter list."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState.zeros_like(self.params)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adam_step(
            self.params,
            [p.grad for p in self.params],
            self.state,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        )
