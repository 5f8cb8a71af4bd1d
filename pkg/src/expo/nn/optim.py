"""Adam and Polyak averaging."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from expo.errors import ConfigurationError, UsageError
from expo.nn.layers import ParamVector


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def _adam_update(state, arrays, grads):
    """In-place Adam update of ``arrays``; moments live in ``state``."""
    if not state.m:
        state.m = [np.zeros_like(a) for a in arrays]
        state.v = [np.zeros_like(a) for a in arrays]
    if len(state.m) != len(arrays):
        raise ConfigurationError("Adam state does not match parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    lr_t = state.lr / c1
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        if g is None:
            continue
        if g.shape != a.shape or m.shape != a.shape:
            raise ConfigurationError("gradient shape does not match parameters")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        a -= lr_t * m / (np.sqrt(v / c2) + state.eps)


def adam_step(state, params, grads):
    """Functional Adam step on flat vectors; returns ``(new_params, new_state)``.

    The input state is left untouched.
    """
    if not isinstance(params, ParamVector) or not isinstance(grads, ParamVector):
        raise ConfigurationError("adam_step expects ParamVectors")
    if params.layout != grads.layout or len(params) != len(grads):
        raise ConfigurationError("params and grads have different layouts")
    new = AdamState(state.lr, state.beta1, state.beta2, state.eps, state.step,
                    [m.copy() for m in state.m], [v.copy() for v in state.v])
    if new.m and new.m[0].shape != params.values.shape:
        raise ConfigurationError("Adam moments do not match parameter layout")
    values = params.values.copy()
    _adam_update(new, [values], [grads.values])
    return ParamVector(values, params.layout), new


class Adam:
    """Adam over a network's parameter tensors, reading their ``.grad``."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr, beta1, beta2, eps)

    def step(self):
        grads = [p.grad for p in self.params]
        if all(g is None for g in grads):
            raise UsageError("Adam.step() called before backward()")
        _adam_update(self.state, [p.data for p in self.params], grads)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def _check_tau(tau):
    if not 0.0 < tau <= 1.0:
        raise ConfigurationError(f"tau must lie in (0, 1], got {tau}")


def polyak_update(target, online, tau):
    """Return (1 - tau) * target + tau * online; tau is the weight on the online values."""
    _check_tau(tau)
    if target.layout != online.layout or len(target) != len(online):
        raise ConfigurationError("target and online layouts differ")
    if tau == 1.0:
        return ParamVector(online.values.copy(), online.layout)
    return ParamVector((1.0 - tau) * target.values + tau * online.values, target.layout)


def polyak_update_(targets, onlines, tau):
    """In-place version over lists of arrays."""
    _check_tau(tau)
    for t, o in zip(targets, onlines):
        t *= 1.0 - tau
        t += tau * o
