"""Traction-scaled unicycle model and trajectory rollouts."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

V_MAX = 3.0
OMEGA_MAX = math.pi


class State(NamedTuple):
    x: float
    y: float
    yaw: float


class Control(NamedTuple):
    v: float
    omega: float


@dataclass(frozen=True)
class ControlLimits:
    v_max: float = V_MAX
    omega_max: float = OMEGA_MAX

    def clamp(self, control: Control) -> Control:
        return Control(
            min(max(control.v, -self.v_max), self.v_max),
            min(max(control.omega, -self.omega_max), self.omega_max),
        )

    def clamp_array(self, controls: np.ndarray) -> np.ndarray:
        """Clamp an array whose last axis is ``(v, omega)``."""
        bound = np.array([self.v_max, self.omega_max])
        return np.clip(controls, -bound, bound)


DEFAULT_LIMITS = ControlLimits()

TractionLookup = Callable[[State], tuple[float, float]]


def step(
    state: State,
    control: Control,
    traction: tuple[float, float],
    dt: float,
    limits: ControlLimits = DEFAULT_LIMITS,
) -> State:
    """One forward-Euler step of the unicycle with traction-scaled velocities."""
    v, omega = limits.clamp(Control(*control))
    psi_lin, psi_ang = traction
    x, y, yaw = state
    return State(
        x + dt * psi_lin * v * math.cos(yaw),
        y + dt * psi_lin * v * math.sin(yaw),
        yaw + dt * psi_ang * omega,
    )


@dataclass(frozen=True)
class Trajectory:
    """States ``x_0 .. x_T`` as a ``(T + 1, 3)`` array."""

    states: np.ndarray
    dt: float

    @property
    def horizon(self) -> int:
        return len(self.states) - 1

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    def state(self, t: int) -> State:
        return State(*map(float, self.states[t]))

    @property
    def final(self) -> State:
        return self.state(-1)


def rollout(
    initial: State,
    controls: Sequence[Control] | np.ndarray,
    traction_lookup: TractionLookup,
    dt: float,
    limits: ControlLimits = DEFAULT_LIMITS,
) -> Trajectory:
    """Apply ``controls`` in sequence, querying traction at each current state.

    ``traction_lookup`` is expected to return zero traction off the map, so a
    robot that leaves the map stalls at the boundary.
    """
    states = [State(*map(float, initial))]
    for u in controls:
        s = states[-1]
        states.append(step(s, Control(float(u[0]), float(u[1])), traction_lookup(s), dt, limits))
    return Trajectory(np.array(states, dtype=np.float64), dt)


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "yaw"])
        for i, (x, y, yaw) in enumerate(traj.states):
            writer.writerow([repr(round(i * traj.dt, 10)), repr(float(x)), repr(float(y)), repr(float(yaw))])


def read_trajectory_csv(path: str | Path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    states = np.array([[float(r["x"]), float(r["y"]), float(r["yaw"])] for r in rows])
    dt = float(rows[1]["t"]) if len(rows) > 1 else 0.0
    return Trajectory(states, dt)
