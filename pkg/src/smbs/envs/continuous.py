"""Continuous-state tasks: noisy cart-pole and puddle world."""

from __future__ import annotations

import math

import numpy as np

from smbs.envs.base import Env, EnvSpec, RandomnessError


class CartPole(Env):
    """Cart-pole with Gaussian noise on the applied force (std = r * 10 N)."""

    gravity = 9.8
    mass_cart = 1.0
    mass_pole = 0.1
    total_mass = mass_cart + mass_pole
    half_length = 0.5
    polemass_length = mass_pole * half_length
    force_mag = 10.0
    tau = 0.02
    theta_limit = 12 * 2 * math.pi / 360
    x_limit = 2.4
    bounds = np.array([4.8, 5.0, 0.42, 5.0])

    def __init__(self, r: float = 0.0, seed: int | None = None, max_episode_steps: int = 500):
        if r < 0:
            raise RandomnessError(f"cartpole r={r} must be nonnegative")
        super().__init__(seed)
        self.r = float(r)
        self.noise_std = self.r * self.force_mag
        self.max_episode_steps = max_episode_steps
        self.spec = EnvSpec(
            name="cartpole",
            randomness=self.r,
            state_kind="continuous",
            action_count=2,
            episodic=True,
            state_dim=4,
            low=tuple(-self.bounds),
            high=tuple(self.bounds),
            reward_range=(0.0, 1.0),
        )

    def _initial_state(self):
        return self.rng.uniform(-0.05, 0.05, size=4)

    def dynamics(self, state: np.ndarray, force: float) -> np.ndarray:
        """One explicit Euler step of the standard cart-pole equations."""
        x, x_dot, theta, theta_dot = state
        cos, sin = math.cos(theta), math.sin(theta)
        temp = (force + self.polemass_length * theta_dot**2 * sin) / self.total_mass
        theta_acc = (self.gravity * sin - cos * temp) / (
            self.half_length * (4.0 / 3.0 - self.mass_pole * cos**2 / self.total_mass)
        )
        x_acc = temp - self.polemass_length * theta_acc * cos / self.total_mass
        nxt = np.array(
            [
                x + self.tau * x_dot,
                x_dot + self.tau * x_acc,
                theta + self.tau * theta_dot,
                theta_dot + self.tau * theta_acc,
            ]
        )
        return np.clip(nxt, -self.bounds, self.bounds)

    def _transition(self, state, action, rng):
        force = self.force_mag if action == 1 else -self.force_mag
        if self.noise_std > 0:
            force += rng.normal(0.0, self.noise_std)
        nxt = self.dynamics(state, force)
        failed = abs(nxt[0]) > self.x_limit or abs(nxt[2]) > self.theta_limit
        return nxt, (0.0 if failed else 1.0), failed

    def _observe(self):
        return self.state.copy()


PUDDLES = (
    ((0.10, 0.75), (0.45, 0.75)),
    ((0.45, 0.40), (0.45, 0.80)),
)
PUDDLE_RADIUS = 0.10
PUDDLE_PENALTY = 400.0
GOAL = np.array([1.0, 1.0])
GOAL_RADIUS = 0.05
STEP_SIZE = 0.05
# up, down, right, left
MOVES = np.array([[0.0, 1.0], [0.0, -1.0], [1.0, 0.0], [-1.0, 0.0]]) * STEP_SIZE


def segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=np.float64) for v in (p, a, b))
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def puddle_depth(p) -> float:
    """Summed penetration depth over both puddles (0 outside)."""
    return sum(max(0.0, PUDDLE_RADIUS - segment_distance(p, a, b)) for a, b in PUDDLES)


def puddle_reward(p) -> float:
    return -1.0 - PUDDLE_PENALTY * puddle_depth(p)


class PuddleWorld(Env):
    """Unit-square navigation to (1, 1) with Gaussian move noise of std r."""

    def __init__(self, r: float = 0.0, seed: int | None = None, max_episode_steps: int = 2000):
        if r < 0:
            raise RandomnessError(f"puddle world r={r} must be nonnegative")
        super().__init__(seed)
        self.r = float(r)
        self.max_episode_steps = max_episode_steps
        self.spec = EnvSpec(
            name="puddle_world",
            randomness=self.r,
            state_kind="continuous",
            action_count=4,
            episodic=True,
            state_dim=2,
            low=(0.0, 0.0),
            high=(1.0, 1.0),
            reward_range=(-1.0 - PUDDLE_PENALTY * 2 * PUDDLE_RADIUS, -1.0),
        )

    @staticmethod
    def at_goal(p) -> bool:
        return float(np.linalg.norm(np.asarray(p) - GOAL)) <= GOAL_RADIUS + 1e-12

    def _initial_state(self):
        while True:
            p = self.rng.uniform(0.0, 1.0, size=2)
            if not self.at_goal(p):
                return p

    def _transition(self, state, action, rng):
        nxt = state + MOVES[action]
        if self.r > 0:
            nxt = nxt + rng.normal(0.0, self.r, size=2)
        nxt = np.clip(nxt, 0.0, 1.0)
        return nxt, puddle_reward(nxt), self.at_goal(nxt)

    def _observe(self):
        return self.state.copy()
