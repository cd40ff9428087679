"""Gradient descent directly in polar coordinates, to reproduce the stagnation
phenomena that motivate the reconnection transform.

Three modes:
  truncate   - r is clamped at 0 and the angular step is scaled by the
               post-clamp radius, which freezes theta once r hits 0;
  dynamic_lr - the radial step uses a learning rate alpha * r_t, which keeps
               r strictly positive whenever alpha * sup||grad f|| < 1;
  reconnect  - r may go negative and (r, theta) is reconnected to
               (|r|, theta + pi) after every step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from .mapping import polar_reconnect

MODES = ("truncate", "dynamic_lr", "reconnect")


def shifted_quadratic_grad(x, y, cx=-1.0, cy=0.0):
    """f = (x - cx)^2 + (y - cy)^2."""
    return (x - cx) ** 2 + (y - cy) ** 2, 2.0 * (x - cx), 2.0 * (y - cy)


def two_well_grad(x, y):
    """f = (x^2 - 1)^2 + y^2: minima at (+-1, 0)."""
    return (x * x - 1.0) ** 2 + y * y, 4.0 * x * (x * x - 1.0), 2.0 * y


OBJECTIVES = {
    "shifted_quadratic": shifted_quadratic_grad,
    "two_well": two_well_grad,
}


@dataclass(frozen=True)
class PolarSimConfig:
    mode: str = "truncate"
    lr: float = 0.3
    momentum: float = 0.0
    alpha: float = 0.1          # dynamic-lr factor
    steps: int = 200
    start: tuple = (1.0, 0.0)   # (r0, theta0)
    objective: str = "shifted_quadratic"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.mode == "dynamic_lr" and self.alpha <= 0:
            raise ValueError("alpha must be positive for dynamic_lr")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")


def simulate(cfg: PolarSimConfig):
    """Run the configured descent; returns [(r, theta, x, y, f), ...] per step,
    including the starting point."""
    grad_fn = OBJECTIVES[cfg.objective]
    r, theta = float(cfg.start[0]), float(cfg.start[1])
    vel_r, vel_t = 0.0, 0.0
    traj = []
    for _ in range(cfg.steps + 1):
        x, y = r * math.cos(theta), r * math.sin(theta)
        f, fx, fy = grad_fn(x, y)
        traj.append((r, theta, x, y, f))
        g_r = math.cos(theta) * fx + math.sin(theta) * fy
        g_t = r * (-math.sin(theta) * fx + math.cos(theta) * fy)
        vel_r = cfg.momentum * vel_r + g_r
        vel_t = cfg.momentum * vel_t + g_t
        if cfg.mode == "truncate":
            r_next = max(0.0, r - cfg.lr * vel_r)
            # angular step scaled by the post-clamp radius: theta freezes at r = 0
            theta = theta - cfg.lr * r_next * (-math.sin(theta) * fx + math.cos(theta) * fy)
            r = r_next
        elif cfg.mode == "dynamic_lr":
            r = r - (cfg.alpha * r) * vel_r
            theta = theta - cfg.lr * vel_t
        else:  # reconnect
            r = r - cfg.lr * vel_r
            theta = theta - cfg.lr * vel_t
            r, theta = polar_reconnect(r, theta)
    return traj


def export_trajectory(traj, path):
    """Deterministic CSV dump: step,r,theta,x,y,f."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "r", "theta", "x", "y", "f"])
        for i, row in enumerate(traj):
            writer.writerow([i] + [repr(v) for v in row])
