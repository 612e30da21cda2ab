"""Network architectures with hand-written reverse-mode gradients.

All kernels operate on an *ensemble* axis ``E`` so that many independent
regressors (one per predictor) train in lock-step. Parameters are a
``(E, P)`` array; inputs are ``(E, B, D, Q)`` windows (channels x time,
newest time step last). Every per-member quantity is computed with batched
``matmul`` or elementwise operations, so a member's numbers do not depend on
which other members share the batch.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from sddp.errors import ConfigError

ARCHITECTURES = ("causal-conv", "mlp", "linear")


@dataclass(frozen=True)
class NetConfig:
    architecture: str = "causal-conv"
    input_channels: int = 1
    window: int = 8
    blocks: int = 3
    channel_width: int = 16
    kernel: int = 3

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}; "
                              f"expected one of {ARCHITECTURES}")
        for name in ("input_channels", "window", "channel_width", "kernel"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.blocks, (int, np.integer)) or self.blocks < 0:
            raise ConfigError(f"blocks must be a nonnegative integer, got {self.blocks!r}")
        if self.architecture == "linear":
            object.__setattr__(self, "blocks", 0)

    @property
    def receptive_field(self):
        """Time steps visible to the last output position.

        For ``causal-conv`` this is ``(kernel - 1) * (2**blocks - 1) + 1``;
        the dense architectures see the whole window. When the receptive
        field is shorter than ``window`` the oldest lags are ignored.
        """
        if self.architecture == "causal-conv":
            return min(self.window, (self.kernel - 1) * (2 ** self.blocks - 1) + 1)
        return self.window

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def layout(config):
    """Ordered ``(name, shape)`` entries of the flat parameter vector."""
    d, q, c, k = config.input_channels, config.window, config.channel_width, config.kernel
    entries = []
    if config.architecture == "linear":
        entries.append(("readout.weight", (d * q,)))
        entries.append(("readout.bias", (1,)))
    elif config.architecture == "mlp":
        fan_in = d * q
        for l in range(config.blocks):
            entries.append((f"dense{l}.weight", (fan_in, c)))
            entries.append((f"dense{l}.bias", (c,)))
            fan_in = c
        entries.append(("readout.weight", (fan_in,)))
        entries.append(("readout.bias", (1,)))
    else:
        c_in = d
        for l in range(config.blocks):
            # tap j = k-1 reads the current position, tap j reads (k-1-j)*2**l steps back
            entries.append((f"conv{l}.weight", (k, c_in, c)))
            entries.append((f"conv{l}.bias", (c,)))
            c_in = c
        entries.append(("readout.weight", (c_in,)))
        entries.append(("readout.bias", (1,)))
    return entries


def layout_offsets(config):
    out = {}
    offset = 0
    for name, shape in layout(config):
        size = int(np.prod(shape))
        out[name] = (offset, shape)
        offset += size
    return out


def param_count(config):
    return int(sum(np.prod(shape) for _, shape in layout(config)))


def fan_in(name, shape):
    if name.endswith(".bias"):
        return None
    if len(shape) == 3:  # conv: (k, c_in, c_out)
        return shape[0] * shape[1]
    return shape[0]


def init_params(config, stream):
    """Weights ~ N(0, 1/fan_in), biases zero, drawn in layout order."""
    parts = []
    for name, shape in layout(config):
        fi = fan_in(name, shape)
        if fi is None:
            parts.append(np.zeros(int(np.prod(shape))))
        else:
            parts.append(stream.normal(int(np.prod(shape))) / np.sqrt(fi))
    return np.concatenate(parts)


def unpack(config, params):
    """Views into an ``(E, P)`` parameter array keyed by layout name."""
    out = {}
    e = params.shape[0]
    for name, (off, shape) in layout_offsets(config).items():
        size = int(np.prod(shape))
        out[name] = params[:, off:off + size].reshape((e,) + tuple(shape))
    return out


def pack(config, parts):
    """Inverse of :func:`unpack`: concatenate named ``(E, ...)`` blocks."""
    blocks = []
    for name, _ in layout(config):
        a = parts[name]
        blocks.append(a.reshape(a.shape[0], -1))
    return np.concatenate(blocks, axis=1)


# --------------------------------------------------------------------------
# causal convolution helpers; activations are kept as (E, B, Q, C)


def _unfold(a, kernel, dilation):
    """Stack the k causal taps: ``(E, B, Q, C) -> (E, B, Q, k*C)``."""
    e, b, q, c = a.shape
    taps = np.zeros((e, b, q, kernel, c))
    for j in range(kernel):
        s = (kernel - 1 - j) * dilation
        if s == 0:
            taps[:, :, :, j, :] = a
        elif s < q:
            taps[:, :, s:, j, :] = a[:, :, :q - s, :]
    return taps.reshape(e, b, q, kernel * c)


def _fold(du, kernel, dilation, channels):
    """Adjoint of :func:`_unfold`."""
    e, b, q, _ = du.shape
    du = du.reshape(e, b, q, kernel, channels)
    da = np.zeros((e, b, q, channels))
    for j in range(kernel):
        s = (kernel - 1 - j) * dilation
        if s == 0:
            da += du[:, :, :, j, :]
        elif s < q:
            da[:, :, :q - s, :] += du[:, :, s:, j, :]
    return da


def forward_batch(config, params, x):
    """Predictions ``(E, B)`` and a cache for :func:`backward_batch`.

    ``params`` is ``(E, P)``; ``x`` is ``(E, B, D, Q)``.
    """
    p = unpack(config, params)
    e, b, d, q = x.shape
    arch = config.architecture
    cache = {"x": x}
    if arch in ("linear", "mlp"):
        h = x.reshape(e, b, d * q)
        acts = [h]
        pre = []
        for l in range(config.blocks):
            z = h @ p[f"dense{l}.weight"] + p[f"dense{l}.bias"][:, None, :]
            pre.append(z)
            h = np.maximum(z, 0.0)
            acts.append(h)
        cache["acts"], cache["pre"] = acts, pre
        feat = h
    else:
        h = np.ascontiguousarray(x.transpose(0, 1, 3, 2))  # (E, B, Q, D)
        cols, pre = [], []
        for l in range(config.blocks):
            w = p[f"conv{l}.weight"]  # (E, k, C_in, C_out)
            k, c_in, c_out = w.shape[1:]
            u = _unfold(h, k, 2 ** l)
            z = (u.reshape(e, b * q, k * c_in) @ w.reshape(e, k * c_in, c_out))
            z = z + p[f"conv{l}.bias"][:, None, :]
            z = z.reshape(e, b, q, c_out)
            cols.append(u)
            pre.append(z)
            h = np.maximum(z, 0.0)
        cache["cols"], cache["pre"] = cols, pre
        feat = h[:, :, -1, :]
    cache["feat"] = feat
    y = (feat @ p["readout.weight"][:, :, None])[:, :, 0] + p["readout.bias"]
    return y, cache


def backward_batch(config, params, cache, dy):
    """Gradient ``(E, P)`` of ``sum_b dy[e, b] * y[e, b]`` for each member."""
    p = unpack(config, params)
    g = {}
    feat = cache["feat"]
    e, b = dy.shape
    g["readout.weight"] = (np.swapaxes(feat, 1, 2) @ dy[:, :, None])[:, :, 0]
    g["readout.bias"] = dy.sum(axis=1, keepdims=True)
    dfeat = dy[:, :, None] * p["readout.weight"][:, None, :]
    arch = config.architecture
    if arch in ("linear", "mlp"):
        acts, pre = cache["acts"], cache["pre"]
        dh = dfeat
        for l in reversed(range(config.blocks)):
            dz = dh * (pre[l] > 0)
            g[f"dense{l}.weight"] = np.swapaxes(acts[l], 1, 2) @ dz
            g[f"dense{l}.bias"] = dz.sum(axis=1)
            dh = dz @ np.swapaxes(p[f"dense{l}.weight"], 1, 2)
        return pack(config, g)
    x = cache["x"]
    q = x.shape[3]
    cols, pre = cache["cols"], cache["pre"]
    c_last = feat.shape[2]
    dh = np.zeros((e, b, q, c_last))
    dh[:, :, -1, :] = dfeat
    for l in reversed(range(config.blocks)):
        w = p[f"conv{l}.weight"]
        k, c_in, c_out = w.shape[1:]
        dz = (dh * (pre[l] > 0)).reshape(e, b * q, c_out)
        u = cols[l].reshape(e, b * q, k * c_in)
        g[f"conv{l}.weight"] = (np.swapaxes(u, 1, 2) @ dz).reshape(e, k, c_in, c_out)
        g[f"conv{l}.bias"] = dz.sum(axis=1)
        if l > 0:
            du = (dz @ np.swapaxes(w.reshape(e, k * c_in, c_out), 1, 2)).reshape(e, b, q, k * c_in)
            dh = _fold(du, k, 2 ** l, c_in)
    return pack(config, g)
