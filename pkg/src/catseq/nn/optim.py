"""Adam optimizer with bias correction; fully deterministic."""

import numpy as np

__all__ = ["adam_step", "Adam"]


def adam_step(param, grad, state, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
    """One Adam update in place; ``state`` holds (m, v, t) per parameter."""
    if param.shape != grad.shape:
        raise ValueError("parameter/gradient shape mismatch")
    b1, b2 = betas
    if not state:
        state["m"] = np.zeros_like(param)
        state["v"] = np.zeros_like(param)
        state["t"] = 0
    state["t"] += 1
    t = state["t"]
    state["m"] = b1 * state["m"] + (1 - b1) * grad
    state["v"] = b2 * state["v"] + (1 - b2) * grad**2
    m_hat = state["m"] / (1 - b1**t)
    v_hat = state["v"] / (1 - b2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return param


class Adam:
    """Adam over a name -> Tensor parameter dict."""

    def __init__(self, params: dict, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = {name: {} for name in params}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        for name, p in self.params.items():
            if p.grad is None:
                continue
            adam_step(p.data, p.grad, self.state[name], self.lr, self.betas, self.eps)
