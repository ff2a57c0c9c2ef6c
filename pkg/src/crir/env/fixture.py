"""Deterministic generator for the bundled desk-scale ratings fixture.

The fixture is format-identical to public MovieLens-1M ratings data but
synthetic: 50 users x 200 items, five genres (item id mod 5), each user
preferring one or two genres.  Preferred-genre items rate high (3-5), the
rest low (1-3), with a fixed fraction of pairs left unrated.
"""

from __future__ import annotations

import numpy as np

__all__ = ["write_fixture"]


def write_fixture(path, n_users: int = 50, n_items: int = 200, n_genres: int = 5,
                  density: float = 0.85, seed: int = 20240501) -> int:
    """Write the fixture ratings file; returns the number of lines."""
    rng = np.random.default_rng(seed)
    lines = []
    stamp = 978300000
    for user in range(1, n_users + 1):
        n_pref = 1 + int(rng.random() < 0.4)
        preferred = set(rng.choice(n_genres, size=n_pref, replace=False).tolist())
        for item in range(1, n_items + 1):
            if rng.random() >= density:
                continue
            if item % n_genres in preferred:
                rating = int(rng.choice([5, 4, 3], p=[0.5, 0.35, 0.15]))
            else:
                rating = int(rng.choice([1, 2, 3], p=[0.5, 0.3, 0.2]))
            lines.append(f"{user}::{item}::{rating}::{stamp}")
            stamp += 1
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return len(lines)
