"""LSTM + dense-head Q network with hand-written backpropagation.

One LSTM layer reads the H price differences one scalar per time step. Its
final hidden state is concatenated with the previous-action scalar and fed
through a tanh dense layer and a linear output layer (3 Q values, or 4
logits for the baseline classifier).

Everything is float64. Parameters are immutable once built; every operation
returns fresh arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from holdq.errors import ConfigError

CHECKPOINT_VERSION = 1

# Field order of NetworkParams, fixed for checkpoints and flattening.
PARAM_NAMES = ("w_x", "w_h", "b_lstm", "w_fc", "b_fc", "w_out", "b_out")


@dataclass(frozen=True)
class NetDims:
    input_size: int  # H + 1
    lstm_hidden: int = 32
    fc_hidden: int = 16
    output_size: int = 3

    def __post_init__(self):
        for name in ("input_size", "lstm_hidden", "fc_hidden", "output_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.input_size < 2:
            raise ConfigError("input_size must be >= 2 (at least one diff plus the action)")

    @property
    def horizon(self) -> int:
        return self.input_size - 1

    def shapes(self) -> dict[str, tuple[int, ...]]:
        h, f, o = self.lstm_hidden, self.fc_hidden, self.output_size
        return {
            "w_x": (1, 4 * h),
            "w_h": (h, 4 * h),
            "b_lstm": (4 * h,),
            "w_fc": (h + 1, f),
            "b_fc": (f,),
            "w_out": (f, o),
            "b_out": (o,),
        }


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkParams:
    """All weights of one network.

    LSTM gates are packed along the last axis in the order input, forget,
    output, candidate.
    """

    dims: NetDims
    w_x: np.ndarray
    w_h: np.ndarray
    b_lstm: np.ndarray
    w_fc: np.ndarray
    b_fc: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        shapes = self.dims.shapes()
        for name in PARAM_NAMES:
            arr = _frozen(getattr(self, name))
            if arr.shape != shapes[name]:
                raise ConfigError(f"{name} has shape {arr.shape}, expected {shapes[name]}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)

    def arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, n) for n in PARAM_NAMES)

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, dims: NetDims, flat) -> "NetworkParams":
        flat = np.asarray(flat, dtype=np.float64)
        out, i = {}, 0
        for name, shape in dims.shapes().items():
            size = int(np.prod(shape))
            out[name] = flat[i:i + size].reshape(shape)
            i += size
        if i != flat.size:
            raise ConfigError(f"flat vector has {flat.size} entries, expected {i}")
        return cls(dims=dims, **out)

    def equals(self, other: "NetworkParams") -> bool:
        return self.dims == other.dims and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


@dataclass(frozen=True)
class GradientSet:
    """Gradients with the same layout as NetworkParams (plain mutable arrays)."""

    w_x: np.ndarray
    w_h: np.ndarray
    b_lstm: np.ndarray
    w_fc: np.ndarray
    b_fc: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, n) for n in PARAM_NAMES)

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "GradientSet":
        return cls(*(np.zeros_like(a) for a in params.arrays()))

    @classmethod
    def from_flat(cls, dims: NetDims, flat) -> "GradientSet":
        p = NetworkParams.from_flat(dims, np.zeros(len(flat)))
        out, i = [], 0
        for a in p.arrays():
            out.append(np.array(flat[i:i + a.size], dtype=np.float64).reshape(a.shape))
            i += a.size
        return cls(*out)


class QValues:
    """Three Q values, indexable by action -1, 0, +1."""

    __slots__ = ("q_short", "q_flat", "q_long")

    def __init__(self, q_short: float, q_flat: float, q_long: float):
        self.q_short = float(q_short)
        self.q_flat = float(q_flat)
        self.q_long = float(q_long)

    @classmethod
    def from_array(cls, q) -> "QValues":
        return cls(q[0], q[1], q[2])

    def __getitem__(self, action: int) -> float:
        return (self.q_short, self.q_flat, self.q_long)[action_index(action)]

    def as_array(self) -> np.ndarray:
        return np.array([self.q_short, self.q_flat, self.q_long])

    def __eq__(self, other):
        return isinstance(other, QValues) and np.array_equal(self.as_array(), other.as_array())

    def __repr__(self):
        return f"QValues(short={self.q_short!r}, flat={self.q_flat!r}, long={self.q_long!r})"


def action_index(action: int) -> int:
    """Column of the Q output that belongs to ``action`` (-1 -> 0, 0 -> 1, +1 -> 2)."""
    if action not in (-1, 0, 1):
        raise ConfigError(f"invalid action {action!r}")
    return int(action) + 1


def init_params(dims: NetDims, seed: int, zero_head: bool = False) -> NetworkParams:
    """Random initial weights.

    Weight matrices are U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases are zero
    except the forget gate, which starts at 1. ``zero_head`` zeroes the output
    layer so every Q value starts at exactly 0.
    """
    rng = np.random.default_rng(seed)
    h = dims.lstm_hidden

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    shapes = dims.shapes()
    w_x = uniform(shapes["w_x"], 1 + h)
    w_h = uniform(shapes["w_h"], 1 + h)
    b_lstm = np.zeros(4 * h)
    b_lstm[h:2 * h] = 1.0
    w_fc = uniform(shapes["w_fc"], h + 1)
    b_fc = np.zeros(dims.fc_hidden)
    w_out = uniform(shapes["w_out"], dims.fc_hidden)
    b_out = np.zeros(dims.output_size)
    if zero_head:
        w_out = np.zeros_like(w_out)
    return NetworkParams(dims, w_x, w_h, b_lstm, w_fc, b_fc, w_out, b_out)


def copy_params(src: NetworkParams) -> NetworkParams:
    return NetworkParams(src.dims, *(a.copy() for a in src.arrays()))


def _check_inputs(params: NetworkParams, diffs: np.ndarray, prev: np.ndarray):
    if diffs.ndim != 2 or diffs.shape[1] != params.dims.horizon:
        raise ConfigError(
            f"state window has {diffs.shape[-1]} diffs, network expects {params.dims.horizon}"
        )
    if prev.shape != (diffs.shape[0],):
        raise ConfigError("need one previous action per window")


def _gate_scale(nh: int) -> np.ndarray:
    # sigmoid(x) = (tanh(x/2) + 1) / 2, so halving the i/f/o pre-activations
    # lets one tanh call serve all four gates.
    s = np.full(4 * nh, 0.5)
    s[3 * nh:] = 1.0
    return s


def forward_batch(params: NetworkParams, diffs, prev, keep_cache: bool = False):
    """Outputs for a batch of windows.

    ``diffs`` is (B, H), oldest first; ``prev`` is (B,). Returns the (B, out)
    output matrix and, with ``keep_cache``, the activations needed by
    :func:`backward_batch`.
    """
    diffs = np.asarray(diffs, dtype=np.float64)
    prev = np.asarray(prev, dtype=np.float64)
    _check_inputs(params, diffs, prev)
    B, T = diffs.shape
    nh = params.dims.lstm_hidden
    scale = _gate_scale(nh)
    w_h = params.w_h * scale
    # (T, B, 4nh) input projections for every step at once
    zx = diffs.T[:, :, None] * (params.w_x[0] * scale) + params.b_lstm * scale

    h = np.zeros((B, nh))
    c = np.zeros((B, nh))
    if keep_cache:
        hs = np.empty((T + 1, B, nh))
        cs = np.empty((T + 1, B, nh))
        gates = np.empty((T, B, 4 * nh))
        hs[0] = h
        cs[0] = c
    for t in range(T):
        z = np.tanh(zx[t] + h @ w_h)
        z[:, :3 * nh] *= 0.5
        z[:, :3 * nh] += 0.5
        c = z[:, nh:2 * nh] * c + z[:, :nh] * z[:, 3 * nh:]
        h = z[:, 2 * nh:3 * nh] * np.tanh(c)
        if keep_cache:
            gates[t] = z
            hs[t + 1] = h
            cs[t + 1] = c

    u = np.concatenate([h, prev[:, None]], axis=1)
    a1 = np.tanh(u @ params.w_fc + params.b_fc)
    out = a1 @ params.w_out + params.b_out
    if not keep_cache:
        return out
    return out, (diffs, hs, cs, gates, u, a1)


def slice_cache(cache, rows: slice):
    """Restrict a forward cache to a contiguous block of batch rows."""
    diffs, hs, cs, gates, u, a1 = cache
    return diffs[rows], hs[:, rows], cs[:, rows], gates[:, rows], u[rows], a1[rows]


def backward_batch(params: NetworkParams, cache, d_out) -> GradientSet:
    """Gradients of sum_b <d_out[b], out[b]> with respect to every parameter.

    Backpropagation through the dense head and through time over the unroll.
    """
    diffs, hs, cs, gates, u, a1 = cache
    d_out = np.asarray(d_out, dtype=np.float64)
    nh = params.dims.lstm_hidden
    T = diffs.shape[1]

    g_w_out = a1.T @ d_out
    g_b_out = d_out.sum(axis=0)
    d_a1 = d_out @ params.w_out.T
    d_z1 = d_a1 * (1.0 - a1 * a1)
    g_w_fc = u.T @ d_z1
    g_b_fc = d_z1.sum(axis=0)
    dh = d_z1 @ params.w_fc[:nh].T

    # local derivative of each gate activation w.r.t. its pre-activation
    dact = gates * (1.0 - gates)
    dact[:, :, 3 * nh:] = 1.0 - gates[:, :, 3 * nh:] ** 2
    tcs = np.tanh(cs[1:])

    dzs = np.empty_like(gates)
    dc = np.zeros_like(dh)
    w_hT = params.w_h.T
    for t in range(T - 1, -1, -1):
        z = gates[t]
        tc = tcs[t]
        dc += dh * z[:, 2 * nh:3 * nh] * (1.0 - tc * tc)
        dz = dzs[t]
        dz[:, :nh] = dc * z[:, 3 * nh:]
        dz[:, nh:2 * nh] = dc * cs[t]
        dz[:, 2 * nh:3 * nh] = dh * tc
        dz[:, 3 * nh:] = dc * z[:, :nh]
        dz *= dact[t]
        dh = dz @ w_hT
        dc *= z[:, nh:2 * nh]

    # parameter gradients accumulated over all steps at once
    flat_dz = dzs.reshape(-1, 4 * nh)
    g_w_x = diffs.T.reshape(-1) @ flat_dz
    g_w_h = hs[:-1].reshape(-1, nh).T @ flat_dz
    g_b = flat_dz.sum(axis=0)
    return GradientSet(g_w_x[None, :], g_w_h, g_b, g_w_fc, g_b_fc, g_w_out, g_b_out)


def _state_arrays(state):
    return np.asarray(state.diffs, dtype=np.float64)[None, :], np.array([float(state.prev_action)])


def forward(params: NetworkParams, state) -> QValues:
    """Q values of a single MarketState."""
    if params.dims.output_size != 3:
        raise ConfigError("forward() returns QValues; use forward_batch for other heads")
    out = forward_batch(params, *_state_arrays(state))
    return QValues.from_array(out[0])


def loss_and_gradient(params: NetworkParams, state, action: int, target: float):
    """Squared error (Q(state)[action] - target)^2 and its exact gradient.

    ``target`` is a constant; nothing flows through it.
    """
    target = float(target)
    if not np.isfinite(target):
        raise ValueError(f"target must be finite, got {target}")
    col = action_index(action)
    out, cache = forward_batch(params, *_state_arrays(state), keep_cache=True)
    err = out[0, col] - target
    d_out = np.zeros_like(out)
    d_out[0, col] = 2.0 * err
    return err * err, backward_batch(params, cache, d_out)


def apply_gradients(params: NetworkParams, grads: GradientSet, batch: int, lr: float) -> NetworkParams:
    """Plain SGD: ``params - lr * grads / batch``."""
    if lr <= 0:
        raise ConfigError("learning rate must be positive")
    if batch < 1:
        raise ConfigError("batch must be >= 1")
    new = []
    for p, g in zip(params.arrays(), grads.arrays()):
        g = np.asarray(g)
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        new.append(p - (lr / batch) * g)
    return NetworkParams(params.dims, *new)


def gradient_check(params: NetworkParams, state, action: int, target: float,
                   step: float = 1e-5, floor: float = 1e-6, grads: GradientSet | None = None):
    """Compare analytic gradients with central finite differences.

    Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``; ``floor``
    keeps entries that are numerically zero on both sides from dominating.
    Returns ``(max_rel_err, worst_index, analytic_flat, numeric_flat)``.
    """
    if grads is None:
        _, grads = loss_and_gradient(params, state, action, target)
    analytic = grads.flatten()
    theta = params.flatten()
    numeric = np.empty_like(theta)
    for k in range(theta.size):
        orig = theta[k]
        theta[k] = orig + step
        lp, _ = _loss_only(params.dims, theta, state, action, target)
        theta[k] = orig - step
        lm, _ = _loss_only(params.dims, theta, state, action, target)
        theta[k] = orig
        numeric[k] = (lp - lm) / (2 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = np.abs(analytic - numeric) / denom
    worst = int(np.argmax(rel))
    return float(rel[worst]), worst, analytic, numeric


def _loss_only(dims, flat, state, action, target):
    p = NetworkParams.from_flat(dims, flat)
    out = forward_batch(p, *_state_arrays(state))
    err = out[0, action_index(action)] - target
    return err * err, out


def describe_index(dims: NetDims, flat_index: int) -> str:
    """Human-readable name of a flat parameter coordinate, e.g. ``w_h[3, 17]``."""
    i = 0
    for name, shape in dims.shapes().items():
        size = int(np.prod(shape))
        if flat_index < i + size:
            idx = np.unravel_index(flat_index - i, shape)
            return f"{name}[{', '.join(str(int(k)) for k in idx)}]"
        i += size
    raise IndexError(flat_index)


# -- checkpoints -------------------------------------------------------------

def params_to_dict(params: NetworkParams) -> dict:
    d = params.dims
    return {
        "format": "holdq-netparams",
        "version": CHECKPOINT_VERSION,
        "dims": {f.name: getattr(d, f.name) for f in fields(d)},
        "order": list(PARAM_NAMES),
        "params": {n: getattr(params, n).ravel().tolist() for n in PARAM_NAMES},
    }


def params_from_dict(data: dict) -> NetworkParams:
    if data.get("format") != "holdq-netparams":
        raise ConfigError("not a holdq network checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {data.get('version')!r}")
    dims = NetDims(**data["dims"])
    shapes = dims.shapes()
    arrays = {n: np.array(data["params"][n], dtype=np.float64).reshape(shapes[n]) for n in PARAM_NAMES}
    return NetworkParams(dims=dims, **arrays)


def save_params(params: NetworkParams, path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params)))


def load_params(path) -> NetworkParams:
    return params_from_dict(json.loads(Path(path).read_text()))
