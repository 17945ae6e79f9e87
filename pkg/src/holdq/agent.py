"""Dual-network online learner.

The learner network (theta) acts epsilon-greedily, stores its own experience
in a FIFO replay buffer and is trained every step on hold-value targets
``r + gamma * Q(s', a)`` that bootstrap with the *same* action. The trader
network (phi) acts greedily and is refreshed from theta only while flat.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from holdq import env as envmod
from holdq.errors import ConfigError, NonFiniteQ
from holdq.market import MarketState, PriceSeries, check_action, diff_series, make_state
from holdq.netcore import (
    NetDims,
    NetworkParams,
    apply_gradients,
    backward_batch,
    copy_params,
    forward_batch,
    init_params,
    slice_cache,
)

log = logging.getLogger(__name__)

# Tie-break preference: flat, then long, then short (as Q-array columns).
_TIE_ORDER = (1, 2, 0)


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.8
    epsilon: float = 0.1
    buffer_cap_L: int = 10_000
    batch_N: int = 32
    lr: float = 1e-3
    H: int = 32
    lstm_hidden: int = 32
    fc_hidden: int = 16
    seed: int = 0
    copy_check_every: int = 1
    input_scale: float = 1.0  # multiplies diffs before they reach the network
    zero_head: bool = True
    warmup_steps: int = 0  # trader is held flat for this many initial steps

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ConfigError("gamma must be in [0, 1)")
        if not 0 <= self.epsilon <= 1:
            raise ConfigError("epsilon must be in [0, 1]")
        if self.batch_N < 1 or self.buffer_cap_L < 1:
            raise ConfigError("buffer capacity and batch size must be >= 1")
        if self.batch_N > self.buffer_cap_L:
            raise ConfigError("batch_N must not exceed buffer_cap_L")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.H < 1 or self.copy_check_every < 1:
            raise ConfigError("H and copy_check_every must be >= 1")
        if self.warmup_steps < 0:
            raise ConfigError("warmup_steps must be >= 0")
        if not self.input_scale > 0:
            raise ConfigError("input_scale must be positive")

    @property
    def dims(self) -> NetDims:
        return NetDims(self.H + 1, self.lstm_hidden, self.fc_hidden, 3)


@dataclass(frozen=True)
class Transition:
    s: MarketState
    a: int
    r: float
    s_next: MarketState

    def __post_init__(self):
        check_action(self.a)
        if self.s_next.prev_action != self.a:
            raise ValueError("s_next must embed the action just taken")


class ReplayBuffer:
    """Bounded FIFO of transitions backed by ring arrays."""

    def __init__(self, capacity: int, H: int):
        if capacity < 1:
            raise ConfigError("capacity must be >= 1")
        self.capacity = capacity
        self.H = H
        self._s = np.empty((capacity, H))
        self._s_prev = np.empty(capacity, dtype=np.int64)
        self._a = np.empty(capacity, dtype=np.int64)
        self._r = np.empty(capacity)
        self._sn = np.empty((capacity, H))
        self._head = 0  # next write slot
        self._size = 0
        self.pushed = 0

    def __len__(self):
        return self._size

    def push(self, tr: Transition) -> None:
        if tr.s.horizon != self.H or tr.s_next.horizon != self.H:
            raise ConfigError(f"transition window length does not match buffer H={self.H}")
        i = self._head
        self._s[i] = tr.s.diffs
        self._s_prev[i] = tr.s.prev_action
        self._a[i] = tr.a
        self._r[i] = tr.r
        self._sn[i] = tr.s_next.diffs
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.pushed += 1

    def _slot(self, k: int) -> int:
        """Ring slot of the k-th oldest stored transition."""
        return (self._head - self._size + k) % self.capacity

    def __getitem__(self, k: int) -> Transition:
        if not -self._size <= k < self._size:
            raise IndexError(k)
        i = self._slot(k % self._size)
        a = int(self._a[i])
        return Transition(
            MarketState(self._s[i], int(self._s_prev[i])), a, float(self._r[i]),
            MarketState(self._sn[i], a),
        )

    def __iter__(self):
        return (self[k] for k in range(self._size))

    def sample(self, n: int, rng: np.random.Generator):
        """Uniform draw of ``n`` distinct transitions as stacked arrays."""
        if n > self._size:
            raise ValueError(f"cannot sample {n} from {self._size} transitions")
        idx = rng.choice(self._size, size=n, replace=False)
        slots = (self._head - self._size + idx) % self.capacity
        return (self._s[slots], self._s_prev[slots], self._a[slots], self._r[slots], self._sn[slots])


class DualAgent:
    def __init__(self, cfg: AgentConfig, theta: NetworkParams | None = None,
                 phi: NetworkParams | None = None):
        self.cfg = cfg
        dims = cfg.dims
        self.theta = theta if theta is not None else init_params(dims, cfg.seed, zero_head=cfg.zero_head)
        self.phi = phi if phi is not None else copy_params(self.theta)
        if self.theta.dims != self.phi.dims:
            raise ConfigError("theta and phi must have identical shapes")
        self.rng = np.random.default_rng(cfg.seed + 1)
        self.buffer = ReplayBuffer(cfg.buffer_cap_L, cfg.H)
        self.n_copies = 0


def _greedy_from_q(q) -> int:
    if not np.all(np.isfinite(q)):
        raise NonFiniteQ(f"non-finite Q values {q}")
    best = max(_TIE_ORDER, key=lambda col: (q[col], -_TIE_ORDER.index(col)))
    return best - 1


def _q_row(params: NetworkParams, s: MarketState) -> np.ndarray:
    return forward_batch(params, s.diffs[None, :], np.array([float(s.prev_action)]))[0]


def select_greedy(params: NetworkParams, s: MarketState) -> int:
    """argmax_a Q(s, a); ties go to flat, then long, then short."""
    return _greedy_from_q(_q_row(params, s))


def select_epsilon_greedy(params: NetworkParams, s: MarketState, epsilon: float,
                          rng: np.random.Generator) -> int:
    if not 0 <= epsilon <= 1:
        raise ConfigError("epsilon must be in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(3)) - 1
    return select_greedy(params, s)


def td_target(r, gamma, q_next_same_action):
    """Hold-value target ``r + gamma * Q(s', a)`` (works elementwise on arrays)."""
    return r + gamma * q_next_same_action


def train_step(agent: DualAgent, buffer: ReplayBuffer | None = None) -> float | None:
    """One averaged SGD step on theta from a uniform minibatch.

    Returns the mean squared TD error before the update, or ``None`` when the
    buffer holds fewer than ``batch_N`` transitions.
    """
    buffer = agent.buffer if buffer is None else buffer
    cfg = agent.cfg
    n = cfg.batch_N
    if len(buffer) < n:
        return None
    s, s_prev, a, r, sn = buffer.sample(n, agent.rng)
    cols = a + 1
    rows = np.arange(n)
    theta = agent.theta
    # one pass over [s; s_next]; only the first half is backpropagated
    both, cache = forward_batch(
        theta, np.concatenate([s, sn]), np.concatenate([s_prev, a]).astype(np.float64),
        keep_cache=True,
    )
    q_next = both[n:][rows, cols]
    y = td_target(r, cfg.gamma, q_next)
    out = both[:n]
    err = out[rows, cols] - y
    if not np.all(np.isfinite(err)):
        raise NonFiniteQ("TD error became non-finite")
    d_out = np.zeros_like(out)
    d_out[rows, cols] = 2.0 * err
    grads = backward_batch(theta, slice_cache(cache, slice(0, n)), d_out)
    agent.theta = apply_gradients(theta, grads, n, cfg.lr)
    return float(np.mean(err * err))


def maybe_copy(agent: DualAgent, last_trade_action: int) -> bool:
    """Refresh the trader from the learner, but only when the trader is flat."""
    if check_action(last_trade_action) != 0:
        return False
    agent.phi = copy_params(agent.theta)
    agent.n_copies += 1
    return True


@dataclass
class RunTrace:
    """Per-step record of an online run.

    ``steps[k]`` is the diff index at which the k-th decision was taken; the
    executed position then covers prices ``steps[k]+1 -> steps[k]+2``.
    """

    steps: list[int] = field(default_factory=list)
    trade_actions: list[int] = field(default_factory=list)
    learner_actions: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    trade_rewards: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    copied: list[bool] = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    def price_window(self, series: PriceSeries) -> PriceSeries:
        """Prices aligned with ``trade_actions`` (one extra closing price at the end)."""
        if not self.steps:
            raise ValueError("empty trace")
        return series.slice(self.steps[0] + 1, self.steps[-1] + 3)


def run_online(agent: DualAgent, series: PriceSeries, cfg: envmod.EnvConfig,
               progress_every: int = 0) -> RunTrace:
    """Trade with phi and learn with theta over the whole series, one step per bar."""
    acfg = agent.cfg
    if cfg.H != acfg.H:
        raise ConfigError(f"env H={cfg.H} differs from agent H={acfg.H}")
    if len(series) < cfg.H + 2:
        raise ConfigError(f"series needs at least H+2={cfg.H + 2} prices")
    diffs = diff_series(series)
    feats = diffs * acfg.input_scale if acfg.input_scale != 1.0 else diffs

    trade_env = envmod.reset(cfg, diffs)
    learn_env = envmod.reset(cfg, diffs)
    trace = RunTrace()
    s_learn = make_state(feats, learn_env.t, cfg.H, learn_env.position)
    step_no = 0
    while not envmod.is_done(trade_env, diffs):
        t = trade_env.t
        s_trade = make_state(feats, t, cfg.H, trade_env.position)
        a_trade = 0 if step_no < acfg.warmup_steps else select_greedy(agent.phi, s_trade)
        trade_res = envmod.step(trade_env, cfg, diffs, a_trade)

        a_learn = select_epsilon_greedy(agent.theta, s_learn, acfg.epsilon, agent.rng)
        learn_res = envmod.step(learn_env, cfg, diffs, a_learn)
        s_next = make_state(feats, learn_env.t, cfg.H, a_learn)
        agent.buffer.push(Transition(s_learn, a_learn, learn_res.reward, s_next))
        s_learn = s_next

        loss = train_step(agent)
        copied = False
        if step_no % acfg.copy_check_every == 0:
            copied = maybe_copy(agent, a_trade)

        trace.steps.append(t)
        trace.trade_actions.append(a_trade)
        trace.learner_actions.append(a_learn)
        trace.rewards.append(learn_res.reward)
        trace.trade_rewards.append(trade_res.reward)
        trace.losses.append(float("nan") if loss is None else loss)
        trace.copied.append(copied)
        step_no += 1
        if progress_every and step_no % progress_every == 0:
            log.info("step %d: trade pnl %.4f, copies %d", step_no,
                     sum(trace.trade_rewards), agent.n_copies)
    return trace
