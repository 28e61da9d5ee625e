"""Stormy & swampy road: a 1-D car on a 21-cell road flanked by swamp.

Positions run from -12 to 12 (index = position + 12).  Cells with
``|pos| <= 10`` are road, the two outer cells on each side are swamp.
"""

from __future__ import annotations

import numpy as np

from smbs.envs.base import DiscreteEnv, EnvSpec, RandomnessError

ROAD_HALF_WIDTH = 10
SWAMP_WIDTH = 2
MAX_POS = ROAD_HALF_WIDTH + SWAMP_WIDTH
NUM_POSITIONS = 2 * MAX_POS + 1

# strong-left, mild-left, mild-right, strong-right
DISPLACEMENT = (-2, -1, 1, 2)
RETURN_PROB = {2: 0.9, 1: 0.5}

ROAD_REWARD = 1.0
SWAMP_REWARD = -10.0


def on_road(pos: int) -> bool:
    return abs(pos) <= ROAD_HALF_WIDTH


class StormyRoad(DiscreteEnv):
    """Continuing task; the storm nudges the car by -1/+1 w.p. r each.

    On the road the action displacement is applied, then the storm shift,
    then the position is clipped to the swamp's outer edge.  In the swamp the
    car is stuck: steering toward the road puts it back on the road edge with
    probability 0.9 (strong) or 0.5 (mild), otherwise it stays put; steering
    away pushes it further out (clipped).  Reward is +1 for ending a step on
    the road and -10 for ending it in the swamp.
    """

    def __init__(self, r: float = 0.0, seed: int | None = None):
        if not 0.0 <= r <= 0.5:
            raise RandomnessError(f"stormy road r={r} outside [0, 0.5]")
        super().__init__(seed)
        self.r = float(r)
        self.spec = EnvSpec(
            name="stormy_road",
            randomness=self.r,
            state_kind="discrete",
            action_count=4,
            episodic=False,
            num_states=NUM_POSITIONS,
            reward_range=(SWAMP_REWARD, ROAD_REWARD),
        )

    @staticmethod
    def position(s: int) -> int:
        return s - MAX_POS

    @staticmethod
    def index(pos: int) -> int:
        return pos + MAX_POS

    @staticmethod
    def _reward(pos: int) -> float:
        return ROAD_REWARD if on_road(pos) else SWAMP_REWARD

    def start_distribution(self) -> np.ndarray:
        mu = np.zeros(NUM_POSITIONS)
        mu[self.index(0)] = 1.0
        return mu

    def _transition(self, s, a, rng):
        pos = self.position(s)
        disp = DISPLACEMENT[a]
        if on_road(pos):
            u = rng.random()
            shift = -1 if u < self.r else (1 if u < 2 * self.r else 0)
            nxt = int(np.clip(pos + disp + shift, -MAX_POS, MAX_POS))
        elif np.sign(disp) == -np.sign(pos):
            if rng.random() < RETURN_PROB[abs(disp)]:
                nxt = int(np.sign(pos)) * ROAD_HALF_WIDTH
            else:
                nxt = pos
        else:
            nxt = int(np.clip(pos + disp, -MAX_POS, MAX_POS))
        return self.index(nxt), self._reward(nxt), False

    def outcomes(self, s, a):
        pos = self.position(s)
        disp = DISPLACEMENT[a]
        if on_road(pos):
            shifts = ((-1, self.r), (0, 1.0 - 2.0 * self.r), (1, self.r))
            out = []
            for shift, prob in shifts:
                if prob > 0.0:
                    nxt = max(-MAX_POS, min(MAX_POS, pos + disp + shift))
                    out.append((prob, self.index(nxt), self._reward(nxt)))
            return out
        toward = (disp > 0) == (pos < 0)
        if toward:
            p_back = RETURN_PROB[abs(disp)]
            edge = ROAD_HALF_WIDTH if pos > 0 else -ROAD_HALF_WIDTH
            return [
                (p_back, self.index(edge), self._reward(edge)),
                (1.0 - p_back, s, self._reward(pos)),
            ]
        nxt = max(-MAX_POS, min(MAX_POS, pos + disp))
        return [(1.0, self.index(nxt), self._reward(nxt))]
