"""Dense networks built on the autograd tensors.

Two call paths exist for every network: ``net(x)`` builds a gradient graph,
``net.apply(x)`` is a plain numpy forward used for acting and for target
evaluation.  Both compute the same function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from expo.errors import ConfigurationError
from expo.nn import autograd as ag
from expo.nn.autograd import DTYPE, Tensor

ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass(frozen=True)
class ParamVector:
    """Flat parameter values plus the layer widths that produced them."""

    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=DTYPE).ravel())
        object.__setattr__(self, "layout", tuple(int(w) for w in self.layout))

    def __len__(self):
        return self.values.size

    def _check(self, other):
        if not isinstance(other, ParamVector) or other.layout != self.layout or len(other) != len(self):
            raise ConfigurationError("ParamVector layouts differ")

    def __add__(self, other):
        self._check(other)
        return ParamVector(self.values + other.values, self.layout)

    def __sub__(self, other):
        self._check(other)
        return ParamVector(self.values - other.values, self.layout)

    def __mul__(self, c):
        return ParamVector(self.values * float(c), self.layout)

    __rmul__ = __mul__

    def is_finite(self):
        return bool(np.all(np.isfinite(self.values)))


def _act_np(name, x):
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "tanh":
        return np.tanh(x)
    return x


def _act(name, x):
    if name == "relu":
        return ag.relu(x)
    if name == "tanh":
        return ag.tanh(x)
    return x


class Network:
    """Shared parameter plumbing; subclasses define ``widths`` and ``params``."""

    params: list
    widths: tuple
    ensemble: int | None = None

    @property
    def layout(self):
        return tuple(self.widths)

    def param_arrays(self):
        return [p.data for p in self.params]

    def param_vector(self):
        return ParamVector(np.concatenate([p.data.ravel() for p in self.params]), self.layout)

    def load_param_vector(self, vec):
        if tuple(vec.layout) != self.layout:
            raise ConfigurationError(f"layout {vec.layout} does not match network {self.layout}")
        values = np.asarray(vec.values, dtype=DTYPE)
        size = sum(p.data.size for p in self.params)
        if values.size != size:
            raise ConfigurationError(f"expected {size} parameters, got {values.size}")
        offset = 0
        for p in self.params:
            n = p.data.size
            p.data[...] = values[offset:offset + n].reshape(p.data.shape)
            offset += n

    def copy_arrays(self):
        return [a.copy() for a in self.param_arrays()]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def num_params(self):
        return sum(p.data.size for p in self.params)


def _init_layer(rng, fan_in, fan_out, ensemble, scale=None):
    bound = 1.0 / np.sqrt(fan_in) if scale is None else scale
    lead = () if ensemble is None else (ensemble,)
    w = rng.uniform(-bound, bound, size=lead + (fan_in, fan_out))
    if scale is None:
        b = rng.uniform(-bound, bound, size=lead + (1, fan_out) if ensemble else (fan_out,))
    else:
        b = np.zeros(lead + (1, fan_out) if ensemble else (fan_out,))
    return Tensor(w.astype(DTYPE), requires_grad=True), Tensor(b.astype(DTYPE), requires_grad=True)


class Mlp(Network):
    """Fully connected network with one activation per layer.

    ``widths`` lists every layer width including input and output.  With
    ``ensemble=K`` all weights carry a leading member axis and the network
    evaluates K independent members in one batched matmul; inputs of shape
    (B, in) are shared by all members, inputs of shape (K, B, in) are not.
    """

    def __init__(self, widths, activations=None, rng=None, ensemble=None,
                 final_scale=None, dropout=0.0):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ConfigurationError(f"invalid layer widths {widths}")
        n_layers = len(widths) - 1
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + ["identity"]
        elif isinstance(activations, str):
            activations = [activations] * n_layers
        activations = list(activations)
        if len(activations) != n_layers or any(a not in ACTIVATIONS for a in activations):
            raise ConfigurationError(f"bad activations {activations} for {n_layers} layers")
        if not 0.0 <= dropout < 1.0:
            raise ConfigurationError("dropout must lie in [0, 1)")
        rng = np.random.default_rng(0) if rng is None else rng
        self.widths = widths
        self.activations = activations
        self.ensemble = ensemble
        self.dropout = float(dropout)
        self.params = []
        for i in range(n_layers):
            scale = final_scale if i == n_layers - 1 else None
            w, b = _init_layer(rng, widths[i], widths[i + 1], ensemble, scale)
            self.params += [w, b]

    def _check_input(self, x):
        if x.shape[-1] != self.widths[0]:
            raise ConfigurationError(
                f"input width {x.shape[-1]} does not match first layer width {self.widths[0]}"
            )

    def __call__(self, x, rng=None, frozen=False):
        """Differentiable forward.

        ``rng`` enables dropout on hidden layers.  ``frozen`` treats the weights
        as constants so gradients flow to the input only.
        """
        x = ag.as_tensor(x)
        self._check_input(x)
        n_layers = len(self.widths) - 1
        params = [Tensor(p.data) for p in self.params] if frozen else self.params
        for i in range(n_layers):
            w, b = params[2 * i], params[2 * i + 1]
            x = _act(self.activations[i], x @ w + b)
            if rng is not None and self.dropout > 0.0 and i < n_layers - 1:
                keep = rng.random(x.shape) >= self.dropout
                x = x * (keep / (1.0 - self.dropout))
        return x

    def apply(self, x, params=None):
        """Numpy forward without dropout; ``params`` overrides the weights (e.g. targets)."""
        x = np.asarray(x, dtype=DTYPE)
        self._check_input(x)
        arrays = self.param_arrays() if params is None else params
        for i, act in enumerate(self.activations):
            x = _act_np(act, x @ arrays[2 * i] + arrays[2 * i + 1])
        return x


class ResidualMlp(Network):
    """Input projection, ``n_blocks`` residual blocks h + W2 relu(W1 h), then an output head."""

    def __init__(self, in_dim, hidden, n_blocks, out_dim, rng=None, activation="relu"):
        if in_dim <= 0 or hidden <= 0 or out_dim <= 0 or n_blocks < 0:
            raise ConfigurationError("invalid residual network dimensions")
        rng = np.random.default_rng(0) if rng is None else rng
        self.in_dim, self.hidden, self.n_blocks, self.out_dim = in_dim, hidden, n_blocks, out_dim
        self.activation = activation
        self.widths = (in_dim,) + (hidden,) * (2 * n_blocks + 1) + (out_dim,)
        self.params = []
        for i in range(len(self.widths) - 1):
            w, b = _init_layer(rng, self.widths[i], self.widths[i + 1], None)
            self.params += [w, b]

    def __call__(self, x, rng=None):
        x = ag.as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise ConfigurationError(f"input width {x.shape[-1]} != {self.in_dim}")
        p = self.params
        h = x @ p[0] + p[1]
        for k in range(self.n_blocks):
            w1, b1, w2, b2 = p[2 + 4 * k: 6 + 4 * k]
            h = h + (_act(self.activation, h @ w1 + b1) @ w2 + b2)
        return _act(self.activation, h) @ p[-2] + p[-1]

    def apply(self, x, params=None):
        x = np.asarray(x, dtype=DTYPE)
        if x.shape[-1] != self.in_dim:
            raise ConfigurationError(f"input width {x.shape[-1]} != {self.in_dim}")
        p = self.param_arrays() if params is None else params
        h = x @ p[0] + p[1]
        for k in range(self.n_blocks):
            w1, b1, w2, b2 = p[2 + 4 * k: 6 + 4 * k]
            h = h + (_act_np(self.activation, h @ w1 + b1) @ w2 + b2)
        return _act_np(self.activation, h) @ p[-2] + p[-1]


def forward(net, x):
    """Pure forward pass of ``net`` on ``x``; returns a numpy array."""
    return net.apply(x)


def grad(net, loss):
    """Backpropagate a scalar ``loss`` and return d loss / d params of ``net``."""
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ConfigurationError("loss must be a scalar Tensor")
    net.zero_grad()
    if loss.requires_grad:
        loss.backward()
    flat = [np.zeros(p.data.size) if p.grad is None else p.grad.ravel() for p in net.params]
    return ParamVector(np.concatenate(flat), net.layout)
