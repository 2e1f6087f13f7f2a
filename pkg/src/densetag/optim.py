"""Optimisers over lists of leaf tensors, plus global-norm clipping."""

import numpy as np


def zero_grad(params):
    for p in params:
        p.grad = np.zeros_like(p.data)


def global_norm(params):
    return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None)))


def clip_grad_norm(params, max_norm):
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the norm measured before clipping.
    """
    norm = global_norm(params)
    if max_norm is not None and norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= factor
    return norm


class Adam:
    def __init__(self, params, lr=0.001, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= b1
            m += (1.0 - b1) * p.grad
            v *= b2
            v += (1.0 - b2) * p.grad * p.grad
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGDMomentum:
    """Heavy-ball SGD: ``v = mu * v + g``; ``p -= lr * v``.

    ``project`` optionally maps each updated parameter array back into its
    feasible set in place (used for the layer masks).
    """

    def __init__(self, params, lr=0.015, momentum=0.9, project=None):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.project = project
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.data -= self.lr * v
            if self.project is not None:
                self.project(p.data)


def inverse_time_lr(eta0, rho, epoch):
    """``eta0 / (1 + rho * epoch)``."""
    return eta0 / (1.0 + rho * epoch)
