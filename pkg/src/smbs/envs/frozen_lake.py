"""Frozen Lake as a continuing task: holes and the goal both send the agent home."""

from __future__ import annotations

import numpy as np

from smbs.envs.base import DiscreteEnv, EnvSpec, RandomnessError

MAPS = {
    4: ["SFFF", "FHFH", "FFFH", "HFFG"],
    8: [
        "SFFFFFFF",
        "FFFFFFFF",
        "FFFHFFFF",
        "FFFFFHFF",
        "FFFHFFFF",
        "FHHFFFHF",
        "FHFFHFHF",
        "FFFHFFFG",
    ],
}

LEFT, DOWN, RIGHT, UP = 0, 1, 2, 3
_DELTAS = {LEFT: (0, -1), DOWN: (1, 0), RIGHT: (0, 1), UP: (-1, 0)}
_PERPENDICULAR = {LEFT: (UP, DOWN), RIGHT: (UP, DOWN), UP: (LEFT, RIGHT), DOWN: (LEFT, RIGHT)}


class FrozenLake(DiscreteEnv):
    """Slippery grid: intended move w.p. 1 - 2r, each perpendicular move w.p. r."""

    def __init__(self, size: int = 4, r: float = 0.0, seed: int | None = None):
        if size not in MAPS:
            raise ValueError(f"no canonical {size}x{size} map")
        if not 0.0 <= r <= 1.0 / 3.0 + 1e-12:
            raise RandomnessError(f"frozen lake r={r} outside [0, 1/3]")
        super().__init__(seed)
        self.size = size
        self.r = float(r)
        self.desc = MAPS[size]
        self.start = self._find("S")
        self.goal = self._find("G")
        self.holes = frozenset(
            i * size + j for i, row in enumerate(self.desc) for j, c in enumerate(row) if c == "H"
        )
        self.spec = EnvSpec(
            name=f"frozen_lake{size}",
            randomness=self.r,
            state_kind="discrete",
            action_count=4,
            episodic=False,
            num_states=size * size,
            reward_range=(0.0, 1.0),
        )

    def _find(self, ch: str) -> int:
        for i, row in enumerate(self.desc):
            if ch in row:
                return i * self.size + row.index(ch)
        raise ValueError(ch)

    def move(self, s: int, direction: int) -> int:
        row, col = divmod(s, self.size)
        dr, dc = _DELTAS[direction]
        nr, nc = row + dr, col + dc
        if not (0 <= nr < self.size and 0 <= nc < self.size):
            return s
        return nr * self.size + nc

    def land(self, cell: int) -> tuple[int, float]:
        """Where the agent ends up, and the reward, after arriving at ``cell``."""
        if cell == self.goal:
            return self.start, 1.0
        if cell in self.holes:
            return self.start, 0.0
        return cell, 0.0

    def start_distribution(self) -> np.ndarray:
        mu = np.zeros(self.size * self.size)
        mu[self.start] = 1.0
        return mu

    def _transition(self, s, a, rng):
        u = rng.random()
        p = 1.0 - 2.0 * self.r
        if u < p:
            direction = a
        elif u < p + self.r:
            direction = _PERPENDICULAR[a][0]
        else:
            direction = _PERPENDICULAR[a][1]
        nxt, reward = self.land(self.move(s, direction))
        return nxt, reward, False

    def outcomes(self, s, a):
        out = []
        for direction, prob in (
            (a, 1.0 - 2.0 * self.r),
            (_PERPENDICULAR[a][0], self.r),
            (_PERPENDICULAR[a][1], self.r),
        ):
            if prob > 0.0:
                nxt, reward = self.land(self.move(s, direction))
                out.append((prob, nxt, reward))
        return out
