"""Rating-table simulator in the MovieLens-1M line format.

Rewards follow a fixed per-item rule: rating 1 or unrated pairs score -1,
otherwise (rating-1)^2; repeated recommendations are penalized with
max(-1, min(0.3, 1.1 - 0.2 * repeat_count)); positive scores are divided by
16 so everything lands in [-1, 1].  A step scores the best of the presented
items and appends that item (with its own reward as feedback) to the
episode history.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from ..staterep import BehaviorRecord

__all__ = ["EpisodeState", "Ml1mEnv", "RatingTable", "load_ml1m"]

logger = logging.getLogger(__name__)


class RatingTable:
    """(user, item) -> rating in 1..5, plus id catalogs and genre features.

    Absent pairs are reported as ``None``, distinct from rating 1.  Genres
    are synthesized deterministically from item ids (id mod n_genres) so any
    file in the line format gets a usable genre partition.
    """

    def __init__(self, ratings: dict, n_genres: int = 5, line_count: int = 0, malformed_count: int = 0):
        self.ratings = ratings
        self.n_genres = n_genres
        self.line_count = line_count
        self.malformed_count = malformed_count
        self.users = sorted({u for u, _ in ratings})
        self.items = sorted({i for _, i in ratings})

    def rate(self, user_id: int, item_id: int) -> int | None:
        return self.ratings.get((user_id, item_id))

    def genre_of(self, item_id: int) -> int:
        return item_id % self.n_genres

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)


def load_ml1m(path, n_genres: int = 5, max_malformed_fraction: float = 0.01) -> RatingTable:
    """Parse ``UserID::MovieID::Rating::Timestamp`` lines into a RatingTable.

    Malformed lines (wrong field count, non-integer fields, rating outside
    1..5) are counted and skipped; more than ``max_malformed_fraction`` of
    them rejects the file.
    """
    ratings: dict = {}
    lines = 0
    malformed = 0
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as err:
        raise ValueError(f"cannot read ratings file {path}: {err}") from err
    with fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            lines += 1
            parts = line.split("::")
            if len(parts) != 4:
                malformed += 1
                continue
            try:
                user, item, rating = int(parts[0]), int(parts[1]), int(parts[2])
                int(parts[3])
            except ValueError:
                malformed += 1
                continue
            if not 1 <= rating <= 5:
                malformed += 1
                continue
            ratings[(user, item)] = rating
    if lines and malformed / lines > max_malformed_fraction:
        raise ValueError(f"{malformed}/{lines} malformed lines exceeds {max_malformed_fraction:.0%}")
    if malformed:
        logger.warning("skipped %d malformed of %d lines in %s", malformed, lines, path)
    return RatingTable(ratings, n_genres=n_genres, line_count=lines, malformed_count=malformed)


def get_reward(rating: int | None, repeat_count: int) -> float:
    """Per-item reward given the (possibly shifted) rating and how often the
    item already appears in the episode history."""
    if rating is None or rating == 1:
        return -1.0
    score = float((rating - 1) ** 2)
    if repeat_count > 0:
        score = max(-1.0, min(0.3, 1.1 - 0.2 * repeat_count))
    if score > 0:
        score = score / 16.0
    if score < -1.0:
        score = -1.0
    return score


@dataclass(frozen=True)
class EpisodeState:
    """Active user, recorded history and progress of one episode."""

    user: int  # catalog position of the active user
    history: tuple
    step: int
    done: bool
    shifts: tuple = ()  # accumulated (genre, delta) rating shifts


class Ml1mEnv:
    kind = "discrete"
    reward_range = (-1.0, 1.0)

    def __init__(self, table: RatingTable, rng: np.random.Generator, max_steps: int = 50,
                 interest_shift: bool = True, shift_every: int = 10,
                 early_termination: bool = False, early_patience: int = 10):
        if table.n_users == 0 or table.n_items == 0:
            raise ValueError("rating table is empty")
        self.table = table
        self.rng = rng
        self.max_steps = max_steps
        self.interest_shift = interest_shift
        self.shift_every = shift_every
        self.early_termination = early_termination
        self.early_patience = early_patience

    @property
    def n_users(self) -> int:
        return self.table.n_users

    @property
    def n_items(self) -> int:
        return self.table.n_items

    def reset(self) -> EpisodeState:
        user = int(self.rng.integers(self.table.n_users))
        return EpisodeState(user=user, history=(), step=0, done=False, shifts=())

    def _effective_rating(self, user_id: int, item_id: int, shifts) -> int | None:
        r = self.table.rate(user_id, item_id)
        if r is None:
            return None
        for genre, delta in shifts:
            if self.table.genre_of(item_id) == genre:
                r += delta
        return int(np.clip(r, 1, 5))

    def item_reward(self, state: EpisodeState, item_pos: int) -> float:
        user_id = self.table.users[state.user]
        item_id = self.table.items[item_pos]
        rating = self._effective_rating(user_id, item_id, state.shifts)
        repeats = sum(1 for rec in state.history if rec.item == item_pos)
        return get_reward(rating, repeats)

    def step(self, state: EpisodeState, action_positions) -> tuple[float, EpisodeState, bool]:
        """Score the presented catalog positions, log the best one, advance."""
        if state.done:
            raise ValueError("step on a finished episode")
        actions = list(action_positions)
        if not actions:
            raise ValueError("at least one action is required")
        shifts = state.shifts
        if self.interest_shift and state.step > 0 and state.step % self.shift_every == 0:
            genre = int(self.rng.integers(self.table.n_genres))
            delta = 1 if self.rng.random() < 0.5 else -1
            shifts = shifts + ((genre, delta),)
            state = replace(state, shifts=shifts)
        rewards = [self.item_reward(state, pos) for pos in actions]
        best = int(np.argmax(rewards))
        reward = rewards[best]
        record = BehaviorRecord(item=actions[best], feedback=reward, step_index=state.step)
        history = state.history + (record,)
        step = state.step + 1
        done = step >= self.max_steps
        if not done and self.early_termination and len(history) >= self.early_patience:
            tail = history[-self.early_patience:]
            if all(rec.feedback < 0 for rec in tail):
                done = True
        new_state = EpisodeState(user=state.user, history=history, step=step, done=done, shifts=shifts)
        return reward, new_state, done
