"""Benchmark environments and the name-based factory."""

from smbs.envs.base import DiscreteEnv, Env, EnvObservation, EnvSpec, RandomnessError, as_tabular
from smbs.envs.cliff import Cliff
from smbs.envs.continuous import CartPole, PuddleWorld
from smbs.envs.frozen_lake import FrozenLake
from smbs.envs.stormy_road import StormyRoad

ENV_NAMES = ("stormy_road", "frozen_lake4", "frozen_lake8", "cartpole", "puddle_world", "cliff")


def stormy_road_new(r: float, seed=None) -> StormyRoad:
    return StormyRoad(r, seed)


def frozen_lake_new(size: int, r: float, seed=None) -> FrozenLake:
    return FrozenLake(size, r, seed)


def cartpole_new(r: float, seed=None) -> CartPole:
    return CartPole(r, seed)


def puddle_world_new(r: float, seed=None) -> PuddleWorld:
    return PuddleWorld(r, seed)


def cliff_new(slip: float, seed=None) -> Cliff:
    return Cliff(slip, seed)


def make_env(name: str, r: float, seed=None) -> Env:
    if name == "stormy_road":
        return StormyRoad(r, seed)
    if name == "frozen_lake4":
        return FrozenLake(4, r, seed)
    if name == "frozen_lake8":
        return FrozenLake(8, r, seed)
    if name == "cartpole":
        return CartPole(r, seed)
    if name == "puddle_world":
        return PuddleWorld(r, seed)
    if name == "cliff":
        return Cliff(r, seed)
    raise KeyError(f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}")


__all__ = [
    "ENV_NAMES",
    "CartPole",
    "Cliff",
    "DiscreteEnv",
    "Env",
    "EnvObservation",
    "EnvSpec",
    "FrozenLake",
    "PuddleWorld",
    "RandomnessError",
    "StormyRoad",
    "as_tabular",
    "cartpole_new",
    "cliff_new",
    "frozen_lake_new",
    "make_env",
    "puddle_world_new",
    "stormy_road_new",
]
