"""Convolutional policy and value networks with hand-written gradients.

Both networks share the same trunk layout (no weights shared):

    3x3 conv, 8 filters, stride 1, ReLU
    3x3 conv, 8 filters, stride 2, ReLU
    flatten -> tanh -> tanh -> linear

Tensors are NHWC: an observation batch has shape ``(B, m_max, n_max, 3)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

MANIFEST_FORMAT = "strike-wta-weights"
MANIFEST_VERSION = 1
LAYERS = ("conv1", "conv2", "fc1", "fc2", "fc3")
FILTERS = 8


class WeightsError(ValueError):
    """Weight file does not match the expected manifest or architecture."""


def conv_output_size(m_max: int, n_max: int) -> int:
    return math.ceil(m_max / 2) * math.ceil(n_max / 2) * FILTERS


def layer_widths(m_max: int, n_max: int) -> dict[str, tuple[int, int, int]]:
    """(hidden1, hidden2, output) widths for each head."""
    z = conv_output_size(m_max, n_max)
    act_dim = m_max * n_max
    return {
        "policy": (int(round(math.sqrt(z * act_dim))), 10 * act_dim, act_dim),
        "value": (int(round(math.sqrt(z * 1))), 5, 1),
    }


def _conv_cols(x, stride):
    """im2col for a 3x3 kernel with padding 1: ``(B, Ho, Wo, C*9)``."""
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))[:, ::stride, ::stride]
    B, Ho, Wo, C = win.shape[:4]
    return win.reshape(B, Ho, Wo, C * 9)


def _conv_backward_input(dcols, x_shape, stride):
    B, H, W, C = x_shape
    Ho, Wo = dcols.shape[1:3]
    d = dcols.reshape(B, Ho, Wo, C, 3, 3)
    dxp = np.zeros((B, H + 2, W + 2, C))
    for di in range(3):
        for dj in range(3):
            dxp[:, di : di + stride * (Ho - 1) + 1 : stride, dj : dj + stride * (Wo - 1) + 1 : stride] += d[..., di, dj]
    return dxp[:, 1:-1, 1:-1]


def init_net(m_max: int, n_max: int, head: str, rng: np.random.Generator) -> dict[str, np.ndarray]:
    h1, h2, out = layer_widths(m_max, n_max)[head]
    z = conv_output_size(m_max, n_max)
    shapes = {
        "conv1": ((FILTERS, 3, 3, 3), 27),
        "conv2": ((FILTERS, FILTERS, 3, 3), FILTERS * 9),
        "fc1": ((z, h1), z),
        "fc2": ((h1, h2), h1),
        "fc3": ((h2, out), h2),
    }
    p = {}
    for name in LAYERS:
        shape, fan_in = shapes[name]
        s = math.sqrt(3.0 / fan_in)
        if head == "policy" and name == "fc3":
            s *= 0.01
        p[f"{name}.w"] = rng.uniform(-s, s, shape)
        p[f"{name}.b"] = np.zeros(shape[0] if name.startswith("conv") else shape[1])
    return p


def net_forward(p: dict[str, np.ndarray], x: np.ndarray, keep: bool = False):
    """Forward pass on a ``(B, H, W, 3)`` batch; returns ``(B, out)``."""
    cache = {}
    h = x
    for name, stride in (("conv1", 1), ("conv2", 2)):
        w = p[f"{name}.w"]
        cols = _conv_cols(h, stride)
        pre = cols @ w.reshape(w.shape[0], -1).T + p[f"{name}.b"]
        if keep:
            cache[name] = (h.shape, cols, pre)
        h = np.maximum(pre, 0.0)
    flat = h.reshape(h.shape[0], -1)
    a1 = np.tanh(flat @ p["fc1.w"] + p["fc1.b"])
    a2 = np.tanh(a1 @ p["fc2.w"] + p["fc2.b"])
    out = a2 @ p["fc3.w"] + p["fc3.b"]
    if keep:
        cache.update(flat=flat, conv_shape=h.shape, a1=a1, a2=a2)
        return out, cache
    return out


def net_backward(p: dict[str, np.ndarray], cache: dict, dout: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given ``dout = dL/d(output)``."""
    g = {}
    a1, a2, flat = cache["a1"], cache["a2"], cache["flat"]
    g["fc3.w"] = a2.T @ dout
    g["fc3.b"] = dout.sum(axis=0)
    d2 = (dout @ p["fc3.w"].T) * (1.0 - a2**2)
    g["fc2.w"] = a1.T @ d2
    g["fc2.b"] = d2.sum(axis=0)
    d1 = (d2 @ p["fc2.w"].T) * (1.0 - a1**2)
    g["fc1.w"] = flat.T @ d1
    g["fc1.b"] = d1.sum(axis=0)
    dh = (d1 @ p["fc1.w"].T).reshape(cache["conv_shape"])
    for name, stride in (("conv2", 2), ("conv1", 1)):
        x_shape, cols, pre = cache[name]
        w = p[f"{name}.w"]
        dpre = dh * (pre > 0)
        d2d = dpre.reshape(-1, w.shape[0])
        g[f"{name}.w"] = (d2d.T @ cols.reshape(d2d.shape[0], -1)).reshape(w.shape)
        g[f"{name}.b"] = d2d.sum(axis=0)
        if name == "conv2":
            dcols = (d2d @ w.reshape(w.shape[0], -1)).reshape(cols.shape)
            dh = _conv_backward_input(dcols, x_shape, stride)
    return g


@dataclass
class NetworkParams:
    m_max: int
    n_max: int
    policy: dict[str, np.ndarray]
    value: dict[str, np.ndarray]

    @classmethod
    def initialize(cls, m_max: int, n_max: int, rng: np.random.Generator | int = 0) -> NetworkParams:
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        return cls(m_max, n_max, init_net(m_max, n_max, "policy", rng), init_net(m_max, n_max, "value", rng))

    def tensors(self) -> dict[str, np.ndarray]:
        out = {f"policy/{k}": v for k, v in self.policy.items()}
        out.update({f"value/{k}": v for k, v in self.value.items()})
        return out

    def copy(self) -> NetworkParams:
        return NetworkParams(
            self.m_max,
            self.n_max,
            {k: v.copy() for k, v in self.policy.items()},
            {k: v.copy() for k, v in self.value.items()},
        )


def _as_batch(params: NetworkParams, E: np.ndarray) -> tuple[np.ndarray, bool]:
    E = np.asarray(E, dtype=float)
    single = E.ndim == 3
    if single:
        E = E[None]
    if E.shape[1:] != (params.m_max, params.n_max, 3):
        raise ValueError(f"observation shape {E.shape[1:]} does not match ({params.m_max}, {params.n_max}, 3)")
    return E, single


@dataclass
class ActionDistribution:
    """Independent categorical per weapon row over ``n_max`` targets."""

    logits: np.ndarray  # (..., m_max, n_max)

    @property
    def log_probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=-1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)


def policy_forward(params: NetworkParams, E: np.ndarray) -> ActionDistribution:
    x, single = _as_batch(params, E)
    logits = net_forward(params.policy, x).reshape(-1, params.m_max, params.n_max)
    return ActionDistribution(logits[0] if single else logits)


def value_forward(params: NetworkParams, E: np.ndarray):
    x, single = _as_batch(params, E)
    v = net_forward(params.value, x)[:, 0]
    return float(v[0]) if single else v


def sample_action(dist: ActionDistribution, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one target per weapon row for the first ``m`` rows."""
    p = dist.probs[..., :m, :]
    u = rng.random(p.shape[:-1])
    cdf = np.cumsum(p, axis=-1)
    return np.minimum((cdf < u[..., None]).sum(axis=-1), p.shape[-1] - 1).astype(np.int64)


def greedy_action(dist: ActionDistribution, m: int) -> np.ndarray:
    return np.argmax(dist.logits[..., :m, :], axis=-1).astype(np.int64)


def log_prob_and_entropy(dist: ActionDistribution, a, m: int):
    """Joint log-probability of ``a`` and summed row entropy over the first ``m`` rows."""
    lp = dist.log_probs[..., :m, :]
    a = np.asarray(a, dtype=np.int64)
    chosen = np.take_along_axis(lp, a[..., None], axis=-1)[..., 0]
    ent = -(np.exp(lp) * lp).sum(axis=-1)
    return chosen.sum(axis=-1), ent.sum(axis=-1)


def backward(net: dict[str, np.ndarray], cache: dict, upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients of one head given the gradient at its output."""
    return net_backward(net, cache, upstream.reshape(upstream.shape[0], -1))


def save_params(params: NetworkParams, path) -> None:
    tensors = params.tensors()
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "m_max": params.m_max,
        "n_max": params.n_max,
        "tensors": [{"name": k, "shape": list(v.shape), "dtype": str(v.dtype)} for k, v in tensors.items()],
    }
    arrays = {f"t{i}": np.ascontiguousarray(v) for i, v in enumerate(tensors.values())}
    with open(path, "wb") as fh:
        np.savez_compressed(fh, manifest=np.frombuffer(json.dumps(manifest).encode(), dtype=np.uint8), **arrays)


def load_params(path, m_max: int | None = None, n_max: int | None = None) -> NetworkParams:
    with np.load(path, allow_pickle=False) as data:
        try:
            manifest = json.loads(bytes(data["manifest"]).decode())
        except KeyError:
            raise WeightsError(f"{path}: no manifest") from None
        if manifest.get("format") != MANIFEST_FORMAT:
            raise WeightsError(f"{path}: not a {MANIFEST_FORMAT} file")
        if manifest.get("version", 0) > MANIFEST_VERSION:
            raise WeightsError(f"{path}: manifest version {manifest['version']} is newer than {MANIFEST_VERSION}")
        mm, nn = manifest["m_max"], manifest["n_max"]
        if (m_max is not None and m_max != mm) or (n_max is not None and n_max != nn):
            raise WeightsError(f"{path}: weights are for ({mm}, {nn}), expected ({m_max}, {n_max})")
        out = NetworkParams(mm, nn, {}, {})
        for i, entry in enumerate(manifest["tensors"]):
            arr = data[f"t{i}"]
            if list(arr.shape) != entry["shape"]:
                raise WeightsError(f"{path}: tensor {entry['name']} shape {arr.shape} != {entry['shape']}")
            head, key = entry["name"].split("/", 1)
            getattr(out, head)[key] = arr
    expected = _expected_shapes(mm, nn)
    got = {k: v.shape for k, v in out.tensors().items()}
    if got != expected:
        raise WeightsError(f"{path}: tensor set does not match the ({mm}, {nn}) architecture")
    return out


def _expected_shapes(m_max: int, n_max: int) -> dict[str, tuple]:
    z = conv_output_size(m_max, n_max)
    shapes = {}
    for head, (h1, h2, out) in layer_widths(m_max, n_max).items():
        for name, w in (
            ("conv1", (FILTERS, 3, 3, 3)),
            ("conv2", (FILTERS, FILTERS, 3, 3)),
            ("fc1", (z, h1)),
            ("fc2", (h1, h2)),
            ("fc3", (h2, out)),
        ):
            shapes[f"{head}/{name}.w"] = w
            shapes[f"{head}/{name}.b"] = (w[0],) if name.startswith("conv") else (w[1],)
    return shapes


def registry(m_max: int, n_max: int) -> list[str]:
    """Names of every persisted tensor for an architecture."""
    return list(_expected_shapes(m_max, n_max))
