"""Point-mass navigation in a walled grid maze with a sparse goal reward."""

from __future__ import annotations

from collections import deque

import numpy as np

from expo.errors import ConfigurationError

# 1 = wall, 0 = free; row index is y, column index is x
MEDIUM_MAZE = (
    (1, 1, 1, 1, 1, 1, 1, 1),
    (1, 0, 0, 1, 1, 0, 0, 1),
    (1, 0, 0, 1, 0, 0, 0, 1),
    (1, 1, 0, 0, 0, 1, 1, 1),
    (1, 0, 0, 1, 0, 0, 0, 1),
    (1, 0, 1, 0, 0, 1, 0, 1),
    (1, 0, 0, 0, 1, 0, 0, 1),
    (1, 1, 1, 1, 1, 1, 1, 1),
)

LAYOUTS = {"medium": MEDIUM_MAZE}

_EPS = 1e-6


class PointMaze:
    state_dim = 4
    action_dim = 2

    def __init__(self, layout="medium", start_cell=(1, 1), goal_cell=(6, 6), goal_radius=0.5,
                 dt=0.1, accel=10.0, max_speed=2.0, horizon=300, start_noise=0.1):
        grid = LAYOUTS[layout] if isinstance(layout, str) else layout
        self.grid = np.asarray(grid, dtype=bool)
        self.start_cell = tuple(start_cell)
        self.goal_cell = tuple(goal_cell)
        for name, (r, c) in (("start", self.start_cell), ("goal", self.goal_cell)):
            if self.grid[r, c]:
                raise ConfigurationError(f"{name} cell {(r, c)} is a wall")
        if self.start_cell == self.goal_cell:
            raise ConfigurationError("goal must differ from the start cell")
        self.goal = np.array([self.goal_cell[1] + 0.5, self.goal_cell[0] + 0.5])
        self.goal_radius = float(goal_radius)
        self.dt, self.accel, self.max_speed = float(dt), float(accel), float(max_speed)
        self.horizon = int(horizon)
        self.start_noise = float(start_noise)
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.t = 0
        self.terminal = False

    def is_free(self, x, y):
        r, c = int(np.floor(y)), int(np.floor(x))
        if r < 0 or c < 0 or r >= self.grid.shape[0] or c >= self.grid.shape[1]:
            return False
        return not self.grid[r, c]

    def obs(self):
        return np.concatenate([self.pos, self.vel])

    def reset(self, rng):
        r, c = self.start_cell
        noise = rng.uniform(-self.start_noise, self.start_noise, size=2)
        self.pos = np.array([c + 0.5, r + 0.5]) + noise
        self.vel = np.zeros(2)
        self.t = 0
        self.terminal = False
        return self.obs()

    def _move_axis(self, axis, new):
        """Move along one axis, stopping at the wall face and zeroing that velocity."""
        trial = self.pos.copy()
        trial[axis] = new
        if self.is_free(trial[0], trial[1]):
            self.pos = trial
            return
        cell = np.floor(self.pos[axis])
        if new > self.pos[axis]:
            self.pos[axis] = cell + 1.0 - _EPS
        else:
            self.pos[axis] = cell + _EPS
        self.vel[axis] = 0.0

    def step(self, action):
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0)
        vel = self.vel + self.dt * self.accel * a
        speed = np.linalg.norm(vel)
        if speed > self.max_speed:
            vel *= self.max_speed / speed
        self.vel = vel
        target = self.pos + self.dt * vel
        self._move_axis(0, target[0])
        self._move_axis(1, target[1])
        self.t += 1
        reward = float(np.linalg.norm(self.pos - self.goal) <= self.goal_radius)
        self.terminal = reward > 0.0
        done = self.terminal or self.t >= self.horizon
        return self.obs(), reward, done

    @staticmethod
    def episode_score(rewards):
        """1 if the goal was reached during the episode."""
        return float(np.sum(rewards) > 0)

    def shortest_path(self, cell):
        """BFS over free cells from ``cell`` to the goal cell; list of cells, goal last."""
        goal = self.goal_cell
        prev = {cell: None}
        queue = deque([cell])
        while queue:
            cur = queue.popleft()
            if cur == goal:
                break
            r, c = cur
            for nxt in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
                if nxt not in prev and not self.grid[nxt]:
                    prev[nxt] = cur
                    queue.append(nxt)
        if goal not in prev:
            return None
        path = [goal]
        while path[-1] != cell:
            path.append(prev[path[-1]])
        return path[::-1]


class PointMazeDemonstrator:
    """Waypoint follower: PD control toward the next cell centre on the BFS path."""

    def __init__(self, env, sigma=0.0, kp=2.0, kd=1.0):
        self.env = env
        self.sigma = float(sigma)
        self.kp, self.kd = kp, kd
        self._paths = {}

    def _waypoint(self, pos):
        cell = (int(np.floor(pos[1])), int(np.floor(pos[0])))
        if cell not in self._paths:
            self._paths[cell] = self.env.shortest_path(cell)
        path = self._paths[cell]
        if path is None:
            return None
        if len(path) == 1:
            return self.env.goal
        r, c = path[1]
        return np.array([c + 0.5, r + 0.5])

    def act(self, obs, rng):
        pos, vel = obs[:2], obs[2:]
        target = self._waypoint(pos)
        if target is None:
            a = np.zeros(2)
        else:
            a = self.kp * (target - pos) - self.kd * vel
        if self.sigma > 0:
            a = a + self.sigma * rng.standard_normal(2)
        return np.clip(a, -1.0, 1.0)
