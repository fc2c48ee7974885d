"""Forward integration of intrinsic polynomial curves of any order.

A curve of order k is driven by k tangent vectors v_1 .. v_k: the velocity is
v_1, each v_i feeds the covariant rate of v_{i-1}, and v_k is covariantly
constant.  One integrator step increments every vector inside the current
tangent space, parallel transports the results along the small geodesic step,
and moves the base point with the exponential map.  First order by design;
the step count is the accuracy knob.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import GeometryError, Manifold


class IntegrationError(GeometryError):
    """Manifold operation failed mid-trajectory; carries the step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class PolynomialState:
    """Initial (or nodal) data of an order-k curve: base point plus k vectors."""

    gamma: np.ndarray
    vels: tuple

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        object.__setattr__(
            self, "vels", tuple(np.asarray(v, dtype=float) for v in self.vels)
        )

    @property
    def order(self) -> int:
        return len(self.vels)

    def residuals(self, manifold: Manifold) -> dict:
        """Worst constraint residuals of the base point and every vector."""
        out = dict(manifold.point_residuals(self.gamma))
        for i, v in enumerate(self.vels, start=1):
            for key, val in manifold.tangent_residuals(self.gamma, v).items():
                out[f"v{i}_{key}"] = val
        return out


@dataclass(frozen=True)
class Trajectory:
    """Uniform-grid record of an integrated curve, velocities included.

    The full stack of per-node vectors is kept because the reverse
    (gradient) pass needs them at every node.
    """

    manifold: Manifold
    times: np.ndarray            # (n_nodes,)
    points: np.ndarray           # (n_nodes, *point_shape)
    vels: np.ndarray             # (n_nodes, order, *tangent_shape)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def order(self) -> int:
        return self.vels.shape[1]

    def __len__(self) -> int:
        return len(self.times)

    def state(self, index: int) -> PolynomialState:
        return PolynomialState(self.points[index], tuple(self.vels[index]))

    def node_index(self, t: float) -> int:
        """Nearest grid node; exact midpoints resolve to the earlier node."""
        if self.dt == 0.0:
            if abs(t - self.times[0]) > 1e-9:
                raise ValueError(f"time {t} outside the trajectory")
            return 0
        x = t / self.dt
        idx = math.ceil(x - 0.5)          # round half down
        if idx < 0 or idx >= len(self.times):
            if -1e-9 <= x <= len(self.times) - 1 + 1e-9:
                idx = min(max(idx, 0), len(self.times) - 1)
            else:
                raise ValueError(
                    f"time {t} outside [0, {self.duration}]"
                )
        return idx


def integrate_polynomial(manifold: Manifold, state: PolynomialState,
                         duration: float, steps: int) -> Trajectory:
    """Integrate an order-k curve over [0, duration] with the given step count."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    k = state.order
    dt = duration / steps

    points = np.empty((steps + 1,) + manifold.point_shape)
    vels = np.empty((steps + 1, k) + manifold.tangent_shape)
    gamma = np.asarray(state.gamma, dtype=float)
    stack = np.stack(state.vels) if k else np.empty((0,) + manifold.tangent_shape)
    points[0] = gamma
    vels[0] = stack

    for n in range(steps):
        try:
            if k:
                w = stack[0]
                step_vec = dt * w
                incremented = stack.copy()
                if k > 1:
                    incremented[:-1] += dt * stack[1:]
                stack = manifold.transport(gamma, step_vec, incremented)
                gamma = manifold.project_point(manifold.exp(gamma, step_vec))
            # order zero: constant curve
        except GeometryError as exc:
            raise IntegrationError(
                f"integration failed at step {n} (t = {n * dt:g}): {exc}", step=n
            ) from exc
        points[n + 1] = gamma
        vels[n + 1] = stack

    times = np.linspace(0.0, duration, steps + 1)
    return Trajectory(manifold=manifold, times=times, points=points, vels=vels)


def sample_curve(traj: Trajectory, times) -> np.ndarray:
    """Curve points at the requested times, snapped to the nearest grid node."""
    idx = [traj.node_index(float(t)) for t in np.atleast_1d(times)]
    return traj.points[idx]


def collinearity_diagnostic(manifold: Manifold, state: PolynomialState) -> float:
    """How close the initial vectors are to a common line through v_1.

    Returns the smallest absolute cosine between v_1 and any other nonzero
    v_i, so 1 means a pure time reparametrization of a geodesic image and 0
    means some vector is orthogonal to the velocity.
    """
    if state.order < 2:
        raise ValueError("diagnostic needs at least two vectors (order >= 2)")
    p = state.gamma
    v1 = state.vels[0]
    n1 = manifold.norm(p, v1)
    if n1 == 0.0:
        raise ValueError("diagnostic undefined for zero initial velocity")
    score = 1.0
    for v in state.vels[1:]:
        nv = manifold.norm(p, v)
        if nv == 0.0:
            continue
        cosine = abs(manifold.inner(p, v, v1)) / (nv * n1)
        score = min(score, cosine)
    return score
