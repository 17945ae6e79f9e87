"""Single-asset trading environment with a fixed per-unit transaction cost.

The position held over the interval after step ``t`` is the action taken at
``t``. Reward for that step is the position times the next price difference,
minus ``cost_c`` times the size of the position change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from holdq.errors import ConfigError, EpisodeDone
from holdq.market import MarketState, check_action, make_state


@dataclass(frozen=True)
class EnvConfig:
    cost_c: float = 0.0
    H: int = 32

    def __post_init__(self):
        if not (self.cost_c >= 0):
            raise ConfigError(f"cost_c must be >= 0, got {self.cost_c}")
        if self.H < 1:
            raise ConfigError("H must be >= 1")


@dataclass
class EnvState:
    t: int
    position: int = 0


@dataclass(frozen=True)
class StepResult:
    reward: float
    next_state: MarketState
    done: bool


def reward(action: int, prev_action: int, d_next: float, cost_c: float) -> float:
    return action * d_next - cost_c * abs(action - prev_action)


def reset(cfg: EnvConfig, diffs) -> EnvState:
    """Flat position at the first index with a full window and a next diff."""
    if len(diffs) < cfg.H + 1:
        raise ConfigError(f"need at least H+1={cfg.H + 1} diffs, got {len(diffs)}")
    return EnvState(t=cfg.H - 1, position=0)


def is_done(env: EnvState, diffs) -> bool:
    return env.t + 1 >= len(diffs)


def observe(env: EnvState, cfg: EnvConfig, diffs) -> MarketState:
    return make_state(diffs, env.t, cfg.H, env.position)


def step(env: EnvState, cfg: EnvConfig, diffs, action: int) -> StepResult:
    """Execute ``action`` at ``env.t``; mutates ``env`` in place."""
    check_action(action)
    if is_done(env, diffs):
        raise EpisodeDone(f"no price difference after index {env.t}")
    r = reward(action, env.position, diffs[env.t + 1], cfg.cost_c)
    env.position = action
    env.t += 1
    return StepResult(r, make_state(diffs, env.t, cfg.H, action), is_done(env, diffs))


def accounting_total(actions, diffs, cost_c: float) -> float:
    """Closed-form cumulative reward: sum a_k*d_k - c * sum |a_k - a_{k-1}|.

    ``actions[k]`` is the position held over ``diffs[k]``; the position before
    the first action is flat.
    """
    a = np.asarray(actions, dtype=np.float64)
    d = np.asarray(diffs, dtype=np.float64)
    if a.shape != d.shape:
        raise ValueError("need one diff per action")
    changes = np.abs(np.diff(np.concatenate([[0.0], a])))
    return float(np.sum(a * d) - cost_c * np.sum(changes))
