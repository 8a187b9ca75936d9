"""The two MDP environments.

PDEModelEnv integrates the 2D heat equation with a gridded control source;
HeatInvaderEnv integrates a convection-diffusion room with a stationary
disturbance bump, wall fans, and a 4x50 bank of floor conditioners.

Both expose reset/step with function-valued (gridded) actions, run exactly
40 steps per episode, and draw all randomness from their own seeded stream.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import fields
from .adapters import EXECUTABLE_COLS, EXECUTABLE_DIMS, EXECUTABLE_ROWS
from .errors import ShapeMismatchError, SimulationBlowUpError
from .fields import ScalarField2D, VelocityField2D

AIRFLOW_MODES = ("uniform", "whirl")


@dataclass
class StepResult:
    next_state: ScalarField2D
    reward: float
    done: bool


def pde_model_reward(next_values: np.ndarray, action_values: np.ndarray) -> float:
    """-(|x'| + |a|) / d with d the grid side length."""
    d = next_values.shape[0]
    return float(-(np.linalg.norm(next_values) + np.linalg.norm(action_values)) / d)


class PDEModelEnv:
    """Controlled 2D heat equation on a d x d grid.

    Each agent step holds the action fixed while the update
    x <- x + dt * (laplacian(x) + a) runs `substeps` times. Actions are
    clipped to [-1, 1]; out-of-range entries bump `clip_count` instead of
    failing, since exploration noise routinely exceeds the bounds.
    """

    def __init__(self, d=6, dt=0.001, ds=0.1, substeps=100, steps_per_episode=40, seed=0):
        if d < 2:
            raise ValueError(f"grid side must be >= 2, got {d}")
        self.d = int(d)
        self.dt = float(dt)
        self.ds = float(ds)
        self.substeps = int(substeps)
        self.steps_per_episode = int(steps_per_episode)
        self.rng = np.random.default_rng(seed)
        self.state = ScalarField2D(np.zeros((self.d, self.d)), self.ds)
        self.step_count = 0
        self.clip_count = 0

    def reset(self) -> ScalarField2D:
        self.state = ScalarField2D(self.rng.uniform(0.0, 1.0, size=(self.d, self.d)), self.ds)
        self.step_count = 0
        return self.state

    def step(self, action) -> StepResult:
        if self.step_count >= self.steps_per_episode:
            raise RuntimeError("episode is done; call reset() before stepping again")
        a = action.values if isinstance(action, ScalarField2D) else np.asarray(action, dtype=np.float64)
        if a.shape != (self.d, self.d):
            raise ShapeMismatchError(f"action shape {a.shape} does not match state ({self.d}, {self.d})")
        n_out = int(np.count_nonzero((a < -1.0) | (a > 1.0)))
        if n_out:
            self.clip_count += n_out
            a = np.clip(a, -1.0, 1.0)

        x = self.state.values
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(self.substeps):
                x = x + self.dt * (fields._laplacian_values(x, self.ds) + a)
        try:
            self.state = ScalarField2D(x, self.ds)
        except fields.NonFiniteFieldError as exc:
            raise SimulationBlowUpError(f"heat equation blew up at step {self.step_count + 1}") from exc

        self.step_count += 1
        return StepResult(
            next_state=self.state,
            reward=pde_model_reward(x, a),
            done=self.step_count >= self.steps_per_episode,
        )


def fan_trigger(executable_action, threshold: float = 25.0) -> tuple[bool, bool]:
    """Fans fire when the absolute action mass on their half of the room
    strictly exceeds the threshold. Left half is columns 0-24 of each of the
    four conditioner rows."""
    a = np.asarray(executable_action, dtype=np.float64)
    if a.shape != (EXECUTABLE_DIMS,):
        raise ShapeMismatchError(f"expected a ({EXECUTABLE_DIMS},) action vector, got {a.shape}")
    rows = np.abs(a.reshape(EXECUTABLE_ROWS, EXECUTABLE_COLS))
    half = EXECUTABLE_COLS // 2
    return bool(rows[:, :half].sum() > threshold), bool(rows[:, half:].sum() > threshold)


def airflow_field(mode: str, left_on: bool, right_on: bool, grid: int = 50,
                  v0: float = 0.2, omega: float = 0.4) -> VelocityField2D:
    """Velocity field for the active fans.

    uniform: each active fan drives horizontal flow of magnitude v0 inward
    over its half of the room (left fan +x on the left half, right fan -x on
    the right half). whirl: solid-body rotation about the room centre with
    tangential speed omega * r whenever at least one fan is on.
    """
    if mode not in AIRFLOW_MODES:
        raise ValueError(f"unknown airflow mode {mode!r}")
    vx = np.zeros((grid, grid))
    vy = np.zeros((grid, grid))
    if mode == "uniform":
        half = grid // 2
        if left_on:
            vx[:, :half] = v0
        if right_on:
            vx[:, half:] = -v0
    elif left_on or right_on:
        centers = (np.arange(grid) + 0.5) / grid - 0.5
        xr, yr = np.meshgrid(centers, centers)  # rows are y, columns are x
        vx[:] = -omega * yr
        vy[:] = omega * xr
    return VelocityField2D(vx, vy)


def heat_invader_reward(next_values: np.ndarray, executable_action: np.ndarray,
                        t_star: float = 0.501) -> float:
    """-(fraction of cells with |T| > t_star) - |a| / 200."""
    frac = np.count_nonzero(np.abs(next_values) > t_star) / next_values.size
    cost = np.linalg.norm(executable_action) / executable_action.size
    return float(-frac - cost)


class HeatInvaderEnv:
    """Convection-diffusion room on a 50 x 50 grid over [0, 1]^2.

    A stationary Gaussian disturbance ("invader") is placed near the far
    corner at reset; four conditioner rows across the middle of the room
    accept a 200-entry action in [-0.5, 0]; wall fans driven by the action
    mass select the airflow. Integration uses explicit finite differences
    with upwind convection, splitting each agent step into CFL-stable
    substeps.
    """

    def __init__(self, grid=50, inv_pe=0.05, dt_agent=0.1, airflow="uniform",
                 v0=0.2, omega=0.4, invader_amplitude=1.0, invader_width=0.08,
                 fan_threshold=25.0, t_star=0.501, ac_rows=(23, 24, 25, 26),
                 steps_per_episode=40, cfl_safety=0.9, seed=0):
        if grid != 50:
            raise ValueError("the conditioner bank layout fixes the grid at 50 x 50")
        if airflow not in AIRFLOW_MODES:
            raise ValueError(f"unknown airflow mode {airflow!r}")
        if len(ac_rows) != EXECUTABLE_ROWS:
            raise ValueError(f"expected {EXECUTABLE_ROWS} conditioner rows, got {len(ac_rows)}")
        self.grid = int(grid)
        self.ds = 1.0 / self.grid
        self.inv_pe = float(inv_pe)
        self.dt_agent = float(dt_agent)
        self.airflow = airflow
        self.v0 = float(v0)
        self.omega = float(omega)
        self.invader_amplitude = float(invader_amplitude)
        self.invader_width = float(invader_width)
        self.fan_threshold = float(fan_threshold)
        self.t_star = float(t_star)
        self.ac_rows = tuple(int(r) for r in ac_rows)
        self.steps_per_episode = int(steps_per_episode)
        self.cfl_safety = float(cfl_safety)
        self.rng = np.random.default_rng(seed)

        self.state = ScalarField2D(np.zeros((self.grid, self.grid)), self.ds)
        self.invader_pos = (45, 45)
        self._source = np.zeros((self.grid, self.grid))
        self.step_count = 0
        self.clip_count = 0
        self.fans = (False, False)

    def reset(self) -> ScalarField2D:
        self.state = ScalarField2D(np.zeros((self.grid, self.grid)), self.ds)
        # 1-based cell indices in {45..50}^2; cell centre (idx - 0.5) / grid
        i, j = self.rng.integers(45, 51, size=2)
        self.invader_pos = (int(i), int(j))
        y0 = (i - 0.5) / self.grid
        x0 = (j - 0.5) / self.grid
        centers = (np.arange(self.grid) + 0.5) / self.grid
        xg, yg = np.meshgrid(centers, centers)
        r2 = (xg - x0) ** 2 + (yg - y0) ** 2
        self._source = self.invader_amplitude * np.exp(-r2 / (2.0 * self.invader_width**2))
        self.fans = (False, False)
        self.step_count = 0
        return self.state

    def _paint_action(self, executable: np.ndarray) -> np.ndarray:
        a_field = np.zeros((self.grid, self.grid))
        a_field[list(self.ac_rows), :] = executable.reshape(EXECUTABLE_ROWS, EXECUTABLE_COLS)
        return a_field

    def step(self, executable_action) -> StepResult:
        if self.step_count >= self.steps_per_episode:
            raise RuntimeError("episode is done; call reset() before stepping again")
        a = np.asarray(executable_action, dtype=np.float64)
        if a.shape != (EXECUTABLE_DIMS,):
            raise ShapeMismatchError(f"expected a ({EXECUTABLE_DIMS},) action vector, got {a.shape}")
        n_out = int(np.count_nonzero((a < -0.5) | (a > 0.0)))
        if n_out:
            self.clip_count += n_out
            a = np.clip(a, -0.5, 0.0)

        a_field = self._paint_action(a)
        self.fans = fan_trigger(a, self.fan_threshold)
        vel = airflow_field(self.airflow, *self.fans, grid=self.grid, v0=self.v0, omega=self.omega)

        # explicit scheme rate: diffusion 4 (1/Pe)/ds plus upwind |v|/ds
        vmax_x, vmax_y = vel.max_speeds()
        rate = (4.0 * self.inv_pe + vmax_x + vmax_y) / self.ds
        n_sub = max(1, math.ceil(self.dt_agent * rate / self.cfl_safety))
        dt_sub = self.dt_agent / n_sub

        t = self.state.values
        drive = self._source + a_field
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(n_sub):
                dT = (self.inv_pe * fields._laplacian_values(t, self.ds)
                      - fields._advect_values(t, vel.vx, vel.vy, self.ds) + drive)
                t = t + dt_sub * dT
        try:
            self.state = ScalarField2D(t, self.ds)
        except fields.NonFiniteFieldError as exc:
            raise SimulationBlowUpError(
                f"convection-diffusion blew up at step {self.step_count + 1}"
            ) from exc

        self.step_count += 1
        return StepResult(
            next_state=self.state,
            reward=heat_invader_reward(t, a, self.t_star),
            done=self.step_count >= self.steps_per_episode,
        )
