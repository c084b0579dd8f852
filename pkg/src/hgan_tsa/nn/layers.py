"""GRU and dense layers with hand-derived backward passes.

Everything is float64 and batched along the first axis. A forward pass
returns its output plus a tape; the matching backward pass consumes the tape
and returns ``(grads, input_grad)`` where ``grads`` mirrors ``params``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import ShapeError, TapeMismatchError

ACTIVATIONS = ("identity", "sigmoid", "tanh", "softmax")


def sigmoid(x):
    return expit(x)


def softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def glorot(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class Layer:
    """Leaf holding named parameter arrays and a version counter for tapes."""

    params: dict

    def __init__(self):
        self.version = 0

    def named_params(self, prefix=""):
        return {prefix + k: v for k, v in self.params.items()}

    def touch(self):
        self.version += 1

    def zero_grads(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def _check_tape(self, tape):
        if tape.owner is not self or tape.version != self.version:
            raise TapeMismatchError(
                f"{type(self).__name__}: tape was recorded by a different forward pass"
            )


@dataclass
class DenseTape:
    owner: object
    version: int
    x: np.ndarray
    y: np.ndarray


class Dense(Layer):
    """y = act(x W^T + b) with W of shape (out, in)."""

    def __init__(self, n_in, n_out, activation="identity", rng=None):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        self.params = {"W": glorot(rng, n_out, n_in), "b": np.zeros(n_out)}

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"Dense input: expected (batch, {self.n_in}), got {x.shape}")
        a = x @ self.params["W"].T + self.params["b"]
        if self.activation == "sigmoid":
            y = sigmoid(a)
        elif self.activation == "tanh":
            y = np.tanh(a)
        elif self.activation == "softmax":
            y = softmax(a)
        else:
            y = a
        return y, DenseTape(self, self.version, x, y)

    def backward(self, dy, tape):
        self._check_tape(tape)
        y = tape.y
        if dy.shape != y.shape:
            raise ShapeError(f"Dense upstream grad: expected {y.shape}, got {dy.shape}")
        if self.activation == "sigmoid":
            da = dy * y * (1.0 - y)
        elif self.activation == "tanh":
            da = dy * (1.0 - y * y)
        elif self.activation == "softmax":
            da = y * (dy - np.sum(dy * y, axis=1, keepdims=True))
        else:
            da = dy
        grads = {"W": da.T @ tape.x, "b": da.sum(axis=0)}
        return grads, da @ self.params["W"]


@dataclass
class GruTape:
    owner: object
    version: int
    x: np.ndarray  # (B, T, I)
    h0: np.ndarray  # (B, H)
    hs: np.ndarray  # (B, T, H)
    r: np.ndarray
    z: np.ndarray
    hc: np.ndarray  # candidate state
    uh: np.ndarray  # U_h h_{t-1}


class GRULayer(Layer):
    """Gated recurrent unit.

    Per step::

        r  = sigmoid(W_r x + U_r h_prev + b_r)
        z  = sigmoid(W_z x + U_z h_prev + b_z)
        h~ = tanh(W_h x + r * (U_h h_prev) + b_h)
        h  = z * h_prev + (1 - z) * h~
    """

    GATES = ("r", "z", "h")

    def __init__(self, input_size, hidden_size, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_size, self.hidden_size = input_size, hidden_size
        p = {}
        for g in self.GATES:
            p[f"W_{g}"] = glorot(rng, hidden_size, input_size)
        for g in self.GATES:
            p[f"U_{g}"] = glorot(rng, hidden_size, hidden_size)
        for g in self.GATES:
            p[f"b_{g}"] = np.zeros(hidden_size)
        self.params = p

    def forward(self, x, h0=None):
        x = np.asarray(x, dtype=float)
        H, I = self.hidden_size, self.input_size
        if x.ndim != 3 or x.shape[2] != I:
            raise ShapeError(f"GRU x_sequence: expected (batch, time, {I}), got {x.shape}")
        if x.shape[1] == 0:
            raise ShapeError("GRU x_sequence must have at least one time step")
        B, T, _ = x.shape
        h = np.zeros((B, H)) if h0 is None else np.asarray(h0, dtype=float)
        if h.shape != (B, H):
            raise ShapeError(f"GRU h0: expected {(B, H)}, got {h.shape}")
        p = self.params
        h0 = h.copy()
        hs = np.empty((B, T, H))
        r_all, z_all, hc_all, uh_all = (np.empty((B, T, H)) for _ in range(4))
        # input projections for all steps at once
        xr = x @ p["W_r"].T + p["b_r"]
        xz = x @ p["W_z"].T + p["b_z"]
        xh = x @ p["W_h"].T + p["b_h"]
        for t in range(T):
            r = sigmoid(xr[:, t] + h @ p["U_r"].T)
            z = sigmoid(xz[:, t] + h @ p["U_z"].T)
            uh = h @ p["U_h"].T
            hc = np.tanh(xh[:, t] + r * uh)
            h = z * h + (1.0 - z) * hc
            hs[:, t], r_all[:, t], z_all[:, t] = h, r, z
            hc_all[:, t], uh_all[:, t] = hc, uh
        return hs, GruTape(self, self.version, x, h0, hs, r_all, z_all, hc_all, uh_all)

    def backward(self, dhs, tape):
        """Backprop through time; ``dhs`` is dL/dh_t for every step."""
        self._check_tape(tape)
        if dhs.shape != tape.hs.shape:
            raise ShapeError(f"GRU upstream grad: expected {tape.hs.shape}, got {dhs.shape}")
        p = self.params
        g = self.zero_grads()
        B, T, _ = tape.x.shape
        dx = np.zeros_like(tape.x)
        dh_next = np.zeros((B, self.hidden_size))
        for t in range(T - 1, -1, -1):
            hp = tape.hs[:, t - 1] if t > 0 else tape.h0
            r, z, hc, uh = tape.r[:, t], tape.z[:, t], tape.hc[:, t], tape.uh[:, t]
            xt = tape.x[:, t]
            dh = dhs[:, t] + dh_next

            dz = dh * (hp - hc)
            dhc = dh * (1.0 - z)
            dhp = dh * z

            da_h = dhc * (1.0 - hc * hc)
            dr = da_h * uh
            duh = da_h * r
            da_z = dz * z * (1.0 - z)
            da_r = dr * r * (1.0 - r)

            g["W_h"] += da_h.T @ xt
            g["U_h"] += duh.T @ hp
            g["b_h"] += da_h.sum(axis=0)
            g["W_z"] += da_z.T @ xt
            g["U_z"] += da_z.T @ hp
            g["b_z"] += da_z.sum(axis=0)
            g["W_r"] += da_r.T @ xt
            g["U_r"] += da_r.T @ hp
            g["b_r"] += da_r.sum(axis=0)

            dhp += duh @ p["U_h"] + da_z @ p["U_z"] + da_r @ p["U_r"]
            dx[:, t] = da_h @ p["W_h"] + da_z @ p["W_z"] + da_r @ p["W_r"]
            dh_next = dhp
        return g, dx


class GRUStack:
    """Stacked GRU layers; the upper layer reads the lower layer's states."""

    def __init__(self, input_size, hidden_sizes, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.layers = []
        n_in = input_size
        for h in hidden_sizes:
            self.layers.append(GRULayer(n_in, h, rng))
            n_in = h

    @property
    def output_size(self):
        return self.layers[-1].hidden_size

    def named_params(self, prefix=""):
        out = {}
        for i, layer in enumerate(self.layers):
            out.update(layer.named_params(f"{prefix}gru{i}."))
        return out

    def touch(self):
        for layer in self.layers:
            layer.touch()

    def forward(self, x):
        tapes = []
        for layer in self.layers:
            x, tape = layer.forward(x)
            tapes.append(tape)
        return x, tapes

    def backward(self, dhs, tapes, prefix=""):
        grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            g, dhs = self.layers[i].backward(dhs, tapes[i])
            grads.update({f"{prefix}gru{i}.{k}": v for k, v in g.items()})
        return grads, dhs
