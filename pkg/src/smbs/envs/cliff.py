"""Cliff walking on a 4x12 grid with an optional downward slip."""

from __future__ import annotations

import numpy as np

from smbs.envs.base import DiscreteEnv, EnvSpec, RandomnessError

UP, RIGHT, DOWN, LEFT = 0, 1, 2, 3
_DELTAS = {UP: (-1, 0), RIGHT: (0, 1), DOWN: (1, 0), LEFT: (0, -1)}

N_ROWS, N_COLS = 4, 12
STEP_REWARD = -1.0
CLIFF_REWARD = -100.0


class Cliff(DiscreteEnv):
    """After each move, w.p. ``slip`` the agent slides one extra cell down.

    Falling into the cliff costs -100 (instead of -1) and returns the agent to
    the start; reaching the goal ends the episode.
    """

    def __init__(self, slip: float = 0.0, seed: int | None = None, max_episode_steps: int = 500):
        if not 0.0 <= slip <= 0.5:
            raise RandomnessError(f"cliff slip={slip} outside [0, 0.5]")
        super().__init__(seed)
        self.slip = float(slip)
        self.max_episode_steps = max_episode_steps
        self.start = (N_ROWS - 1) * N_COLS
        self.goal = N_ROWS * N_COLS - 1
        self.cliff = frozenset(range(self.start + 1, self.goal))
        self.terminal_states = frozenset({self.goal})
        self.spec = EnvSpec(
            name="cliff",
            randomness=self.slip,
            state_kind="discrete",
            action_count=4,
            episodic=True,
            num_states=N_ROWS * N_COLS,
            reward_range=(CLIFF_REWARD, STEP_REWARD),
        )

    @staticmethod
    def move(s: int, direction: int) -> int:
        row, col = divmod(s, N_COLS)
        dr, dc = _DELTAS[direction]
        nr, nc = row + dr, col + dc
        if not (0 <= nr < N_ROWS and 0 <= nc < N_COLS):
            return s
        return nr * N_COLS + nc

    @staticmethod
    def distance_to_cliff(s: int) -> int:
        """Rows between ``s`` and the cliff row (0 on the bottom row)."""
        return N_ROWS - 1 - s // N_COLS

    def _resolve(self, cell: int) -> tuple[int, float, bool]:
        if cell in self.cliff:
            return self.start, CLIFF_REWARD, False
        return cell, STEP_REWARD, cell == self.goal

    def start_distribution(self) -> np.ndarray:
        mu = np.zeros(N_ROWS * N_COLS)
        mu[self.start] = 1.0
        return mu

    def _transition(self, s, a, rng):
        cell = self.move(s, a)
        if cell in self.cliff or cell == self.goal:
            return self._resolve(cell)
        if rng.random() < self.slip:
            cell = self.move(cell, DOWN)
        return self._resolve(cell)

    def outcomes(self, s, a):
        cell = self.move(s, a)
        if cell in self.cliff or cell == self.goal:
            nxt, rew, _ = self._resolve(cell)
            return [(1.0, nxt, rew)]
        out = []
        if self.slip < 1.0:
            nxt, rew, _ = self._resolve(cell)
            out.append((1.0 - self.slip, nxt, rew))
        if self.slip > 0.0:
            nxt, rew, _ = self._resolve(self.move(cell, DOWN))
            out.append((self.slip, nxt, rew))
        return out
