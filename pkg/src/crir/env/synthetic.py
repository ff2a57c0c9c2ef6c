"""Synthetic continuous environment with drifting user interests.

A stand-in for external continuous-action recommendation platforms: each
user has static features plus a unit-norm interest vector; reward is the
cosine similarity between the action and the interest (zero below a
threshold), and the interest drifts after every few positively-rewarded
steps.  This is a deliberately simple simulator, not a reproduction of any
production system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..staterep import BehaviorRecord

__all__ = ["SyntheticEnv", "SyntheticEpisode", "SyntheticUser"]


@dataclass(frozen=True)
class SyntheticUser:
    features: np.ndarray  # static profile
    interest: np.ndarray  # unit-norm preferred direction


@dataclass(frozen=True)
class SyntheticEpisode:
    user: int
    features: np.ndarray
    interest: np.ndarray
    positive_steps: int
    history: tuple
    step: int
    done: bool


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


class SyntheticEnv:
    kind = "continuous"
    reward_range = (0.0, 1.0)

    def __init__(self, rng: np.random.Generator, n_users: int = 50, user_dim: int = 8,
                 action_dim: int = 16, max_steps: int = 50, threshold: float = 0.3,
                 drift_rate: float = 0.2, drift_every: int = 5):
        self.rng = rng
        self.user_dim = user_dim
        self.item_dim = action_dim
        self.max_steps = max_steps
        self.threshold = threshold
        self.drift_rate = drift_rate
        self.drift_every = drift_every
        self.users = [
            SyntheticUser(
                features=rng.uniform(-1.0, 1.0, size=user_dim),
                interest=_unit(rng.normal(size=action_dim)),
            )
            for _ in range(n_users)
        ]

    @property
    def n_users(self) -> int:
        return len(self.users)

    def reset(self) -> SyntheticEpisode:
        idx = int(self.rng.integers(len(self.users)))
        u = self.users[idx]
        return SyntheticEpisode(user=idx, features=u.features.copy(), interest=u.interest.copy(),
                                positive_steps=0, history=(), step=0, done=False)

    def step(self, state: SyntheticEpisode, action: np.ndarray) -> tuple[float, SyntheticEpisode, bool]:
        if state.done:
            raise ValueError("step on a finished episode")
        a = np.asarray(action, dtype=np.float64).reshape(self.item_dim)
        a_norm = np.linalg.norm(a)
        i_norm = np.linalg.norm(state.interest)
        cos = float(a @ state.interest / (a_norm * i_norm)) if a_norm > 0 and i_norm > 0 else 0.0
        reward = float(np.clip(cos, 0.0, 1.0)) if cos >= self.threshold else 0.0

        positive = state.positive_steps + (1 if reward > 0 else 0)
        interest = state.interest
        if reward > 0 and self.drift_rate > 0 and positive % self.drift_every == 0:
            fresh = _unit(self.rng.normal(size=self.item_dim))
            interest = _unit((1.0 - self.drift_rate) * interest + self.drift_rate * fresh)

        record = BehaviorRecord(item=a.copy(), feedback=reward, step_index=state.step)
        step = state.step + 1
        done = step >= self.max_steps
        return reward, SyntheticEpisode(user=state.user, features=state.features, interest=interest,
                                        positive_steps=positive, history=state.history + (record,),
                                        step=step, done=done), done
