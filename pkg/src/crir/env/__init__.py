from .fixture import write_fixture
from .ml1m import EpisodeState, Ml1mEnv, RatingTable, get_reward, load_ml1m
from .synthetic import SyntheticEnv, SyntheticEpisode, SyntheticUser

__all__ = [
    "EpisodeState",
    "Ml1mEnv",
    "RatingTable",
    "SyntheticEnv",
    "SyntheticEpisode",
    "SyntheticUser",
    "get_reward",
    "load_ml1m",
    "write_fixture",
]
