"""Small float64 MLPs with hand-written backprop, a squashed Gaussian policy,
Adam, and a versioned binary checkpoint container."""
from __future__ import annotations

import io
import math
import struct
from pathlib import Path

import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0


class Mlp:
    """Affine layers with ReLU between them and an identity output."""

    def __init__(self, widths, rng: np.random.Generator | None = None, weights=None, biases=None):
        self.widths = [int(w) for w in widths]
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValueError(f"invalid layer widths {widths}")
        if weights is None:
            rng = rng if rng is not None else np.random.default_rng()
            weights, biases = [], []
            for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
                bound = 1.0 / math.sqrt(fan_in)
                weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
                biases.append(rng.uniform(-bound, bound, size=fan_out))
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.widths[k + 1], self.widths[k]) or b.shape != (self.widths[k + 1],):
                raise ValueError(f"layer {k} arrays do not match widths {self.widths}")

    @property
    def params(self) -> list[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...]; arrays are shared, not copied."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp(self.widths, weights=[w.copy() for w in self.weights],
                   biases=[b.copy() for b in self.biases])

    def forward(self, x, cache: bool = False):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.widths[0]:
            raise ValueError(f"input width {h.shape[1]} != {self.widths[0]}")
        acts = [h]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if k < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        out = h[0] if single else h
        return (out, (single, acts)) if cache else out

    __call__ = forward

    def backward(self, cache, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. parameters and input."""
        single, acts = cache
        g = np.asarray(grad_out, dtype=np.float64)
        g = g[None, :] if single else g
        if g.shape != acts[-1].shape:
            raise ValueError(f"upstream gradient shape {g.shape} != output {acts[-1].shape}")
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            if k < len(self.weights) - 1:
                g = g * (acts[k + 1] > 0.0)
            grads[2 * k] = g.T @ acts[k]
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k]
        return grads, (g[0] if single else g)


class GaussianPolicyHead:
    """Trunk MLP whose output splits into the mean and log-std of a diagonal Gaussian."""

    def __init__(self, obs_dim: int, act_dim: int, hidden=(256, 256),
                 rng: np.random.Generator | None = None, net: Mlp | None = None):
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        if net is None:
            net = Mlp([obs_dim, *hidden, 2 * act_dim], rng)
            # small initial mean so the compensation starts near zero
            net.weights[-1][:act_dim] *= 0.01
            net.biases[-1][:act_dim] *= 0.01
        if net.widths[0] != obs_dim or net.widths[-1] != 2 * act_dim:
            raise ValueError("policy network widths do not match observation/action sizes")
        self.net = net

    def copy(self) -> "GaussianPolicyHead":
        return GaussianPolicyHead(self.obs_dim, self.act_dim, net=self.net.copy())

    def distribution(self, s):
        out = self.net(s)
        mean = out[..., :self.act_dim]
        log_std = np.clip(out[..., self.act_dim:], LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def mean_action(self, s) -> np.ndarray:
        mean, _ = self.distribution(s)
        return 0.5 * (np.tanh(mean) + 1.0)

    def rsample(self, s, noise):
        """Reparameterised sample for a batch; returns (a, log_prob, cache for backward)."""
        out, net_cache = self.net.forward(s, cache=True)
        d = self.act_dim
        mean = out[..., :d]
        raw = out[..., d:]
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        std = np.exp(log_std)
        z = mean + std * noise
        t = np.tanh(z)
        a = 0.5 * (t + 1.0)
        # log(1 - tanh(z)^2) written stably
        log_det = 2.0 * (_LOG2 - z - np.logaddexp(0.0, -2.0 * z)) - _LOG2
        log_prob = np.sum(-0.5 * noise * noise - log_std - 0.5 * _LOG_2PI - log_det, axis=-1)
        cache = (net_cache, t, std, noise, (raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX))
        return a, log_prob, cache

    def backward(self, cache, grad_a, grad_logp):
        """Parameter gradients given dL/da (batch x d) and dL/dlog_prob (batch)."""
        net_cache, t, std, noise, mask = cache
        grad_logp = np.asarray(grad_logp, dtype=np.float64)[..., None]
        grad_z = grad_a * 0.5 * (1.0 - t * t) + grad_logp * 2.0 * t
        grad_mean = grad_z
        grad_log_std = (grad_z * std * noise - grad_logp) * mask
        grads, _ = self.net.backward(net_cache, np.concatenate([grad_mean, grad_log_std], axis=-1))
        return grads


def sample_squashed(head: GaussianPolicyHead, s, rng: np.random.Generator,
                    deterministic: bool = False):
    """Action in [0, 1]^d and its log-density (None in deterministic mode)."""
    if deterministic:
        return head.mean_action(s), None
    s = np.asarray(s, dtype=np.float64)
    noise = rng.standard_normal(s.shape[:-1] + (head.act_dim,))
    a, log_prob, _ = head.rsample(s, noise)
    return a, log_prob


def squashed_log_prob(head: GaussianPolicyHead, s, a) -> np.ndarray:
    """Log-density of given actions in (0, 1)^d."""
    mean, log_std = head.distribution(s)
    a = np.asarray(a, dtype=np.float64)
    t = 2.0 * a - 1.0
    z = np.arctanh(t)
    noise = (z - mean) / np.exp(log_std)
    log_det = np.log1p(-t * t) - _LOG2
    return np.sum(-0.5 * noise * noise - log_std - 0.5 * _LOG_2PI - log_det, axis=-1)


def clip_grad_norm(grads, max_norm: float) -> float:
    """Scale gradients in place to a global norm of at most ``max_norm``; returns the original norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm and norm > max_norm and math.isfinite(norm):
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


class Adam:
    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0
        self.skipped = 0

    def step(self, grads) -> bool:
        """Update parameters in place; returns False (and counts) if any gradient is non-finite."""
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        for g, p in zip(grads, self.params):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter {p.shape}")
            if not np.all(np.isfinite(g)):
                self.skipped += 1
                return False
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return True


# --- checkpoint container ----------------------------------------------------
#
# layout (little endian):
#   magic "TTFSCKPT", u32 version, u32 record count, then per record
#   u16 name length, name (utf-8), u8 kind, payload
#   kind 0 network: u32 layer count + 1, u32 widths..., per layer W (row-major f64) then b
#   kind 1 array:   u32 ndim, u64 shape..., row-major f64 data
#   kind 2 bytes:   u64 length, raw bytes

MAGIC = b"TTFSCKPT"
CHECKPOINT_VERSION = 1
_NET, _ARRAY, _BYTES = 0, 1, 2


class CheckpointError(ValueError):
    pass


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def dump_records(records: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(records)))
    for name, value in records.items():
        key = name.encode("utf-8")
        buf.write(struct.pack("<H", len(key)) + key)
        if isinstance(value, Mlp):
            buf.write(struct.pack("<BI", _NET, len(value.widths)))
            buf.write(struct.pack(f"<{len(value.widths)}I", *value.widths))
            for w, b in zip(value.weights, value.biases):
                buf.write(_f64(w) + _f64(b))
        elif isinstance(value, (bytes, bytearray)):
            buf.write(struct.pack("<BQ", _BYTES, len(value)) + bytes(value))
        else:
            arr = np.asarray(value, dtype=np.float64)
            buf.write(struct.pack("<BI", _ARRAY, arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape) + _f64(arr))
    return buf.getvalue()


def load_records(blob: bytes) -> dict:
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    def f64(count):
        return np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)

    if bytes(take(len(MAGIC))) != MAGIC:
        raise CheckpointError("not a checkpoint file")
    version, count = struct.unpack("<II", take(8))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    records = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        name = bytes(take(n)).decode("utf-8")
        (kind,) = struct.unpack("<B", take(1))
        if kind == _NET:
            (n_w,) = struct.unpack("<I", take(4))
            widths = struct.unpack(f"<{n_w}I", take(4 * n_w))
            weights, biases = [], []
            for fan_in, fan_out in zip(widths[:-1], widths[1:]):
                weights.append(f64(fan_in * fan_out).reshape(fan_out, fan_in))
                biases.append(f64(fan_out))
            records[name] = Mlp(widths, weights=weights, biases=biases)
        elif kind == _ARRAY:
            (ndim,) = struct.unpack("<I", take(4))
            shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
            records[name] = f64(int(np.prod(shape))).reshape(shape)
        elif kind == _BYTES:
            (n_b,) = struct.unpack("<Q", take(8))
            records[name] = bytes(take(n_b))
        else:
            raise CheckpointError(f"unknown record kind {kind}")
    if pos != len(view):
        raise CheckpointError("trailing bytes in checkpoint")
    return records


def save_checkpoint(path, records: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_records(records))


def load_checkpoint(path) -> dict:
    return load_records(Path(path).read_bytes())
