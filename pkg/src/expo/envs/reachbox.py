"""Reach, grasp and lift a box with a Cartesian end effector.

The effector grasps by proximity: once it comes within ``grasp_radius`` of
the object the object snaps to it and follows from then on.  Reward is 1 on
every step where the grasped object is above ``lift_height``; episodes always
run to the horizon.
"""

from __future__ import annotations

import numpy as np


class ReachBox:
    state_dim = 6
    action_dim = 3

    def __init__(self, step_size=0.03, grasp_radius=0.02, lift_height=0.05, horizon=100,
                 tray=0.15, workspace=0.3, ceiling=0.3, start_height=0.15):
        self.step_size = float(step_size)
        self.grasp_radius = float(grasp_radius)
        self.lift_height = float(lift_height)
        self.horizon = int(horizon)
        self.tray = float(tray)
        self.lo = np.array([-workspace, -workspace, 0.0])
        self.hi = np.array([workspace, workspace, ceiling])
        self.start = np.array([0.0, 0.0, start_height])
        self.ee = self.start.copy()
        self.obj = np.zeros(3)
        self.latched = False
        self.t = 0
        self.terminal = False

    def obs(self):
        return np.concatenate([self.ee, self.obj])

    def reset(self, rng):
        self.ee = self.start.copy()
        xy = rng.uniform(-self.tray, self.tray, size=2)
        self.obj = np.array([xy[0], xy[1], 0.0])
        self.latched = False
        self.t = 0
        self.terminal = False
        return self.obs()

    def step(self, action):
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(3), -1.0, 1.0)
        self.ee = np.clip(self.ee + self.step_size * a, self.lo, self.hi)
        if not self.latched and np.linalg.norm(self.ee - self.obj) < self.grasp_radius:
            self.latched = True
        if self.latched:
            self.obj = self.ee.copy()
        self.t += 1
        reward = float(self.latched and self.obj[2] > self.lift_height)
        return self.obs(), reward, self.t >= self.horizon

    def episode_score(self, rewards):
        """Fraction of the horizon spent with the object lifted."""
        return float(np.sum(rewards)) / self.horizon


class ReachBoxDemonstrator:
    """Scripted reach-from-above, descend, grasp, lift."""

    def __init__(self, env, sigma=0.0, hover=0.05, carry_height=0.15):
        self.env = env
        self.sigma = float(sigma)
        self.hover = hover
        self.carry_height = carry_height

    def act(self, obs, rng):
        ee, obj = obs[:3], obs[3:]
        latched = np.linalg.norm(ee - obj) < self.env.grasp_radius
        if latched:
            target = np.array([ee[0], ee[1], self.carry_height])
        elif np.linalg.norm(ee[:2] - obj[:2]) < 0.5 * self.env.grasp_radius:
            target = obj
        else:
            target = np.array([obj[0], obj[1], obj[2] + self.hover])
        a = (target - ee) / self.env.step_size
        if self.sigma > 0:
            a = a + self.sigma * rng.standard_normal(3)
        return np.clip(a, -1.0, 1.0)
