"""Adam optimizer over a named parameter dict, deterministic update order."""

import numpy as np


class Adam:
    def __init__(self, params, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8,
                 clip_norm=5.0):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.clip_norm = clip_norm
        self.t = 0
        self._names = sorted(params)
        self.m = {n: np.zeros_like(params[n].data) for n in self._names}
        self.v = {n: np.zeros_like(params[n].data) for n in self._names}

    def step(self):
        self.t += 1
        grads = {n: self.params[n].grad for n in self._names
                 if self.params[n].grad is not None}
        if self.clip_norm is not None and grads:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if total > self.clip_norm:
                scale = self.clip_norm / total
                grads = {n: g * scale for n, g in grads.items()}
        for n in self._names:
            g = grads.get(n)
            if g is None:
                continue
            self.m[n] = self.beta1 * self.m[n] + (1 - self.beta1) * g
            self.v[n] = self.beta2 * self.v[n] + (1 - self.beta2) * g * g
            mhat = self.m[n] / (1 - self.beta1**self.t)
            vhat = self.v[n] / (1 - self.beta2**self.t)
            self.params[n].data = self.params[n].data - self.lr * mhat / (
                np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for n in self._names:
            self.params[n].zero_grad()

    def state_arrays(self):
        """Flat dict of moment arrays plus the step count, for checkpoints."""
        out = {"adam_t": np.array([self.t])}
        for n in self._names:
            out[f"adam_m::{n}"] = self.m[n]
            out[f"adam_v::{n}"] = self.v[n]
        return out

    def load_state_arrays(self, arrays):
        self.t = int(arrays["adam_t"][0])
        for n in self._names:
            if f"adam_m::{n}" in arrays:
                self.m[n] = np.array(arrays[f"adam_m::{n}"])
                self.v[n] = np.array(arrays[f"adam_v::{n}"])
