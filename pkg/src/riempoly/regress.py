"""Parameter estimation for intrinsic polynomial regression.

The squared-distance objective is differentiated with an adjoint system
integrated backward along the fitted curve: multiplier vectors start at zero
at the final time, pick up a jump from every observation they pass, couple to
the state through the curvature operator, and arrive at t = 0 carrying the
negative gradients with respect to the initial conditions.  A descent loop
with a monotone line search updates the base point through the exponential
map and the vectors through parallel transport.

Observation times are snapped to the nearest trajectory node once, up front;
the time axis is affinely rescaled to [0, 1] internally and every reported
quantity carries the mapping back to original units.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryError, Manifold
from .polyflow import (
    PolynomialState,
    Trajectory,
    collinearity_diagnostic,
    integrate_polynomial,
)

_MAX_ORDER = 6          # guard against runaway stiffness
_MIN_LINE_STEP = 1e-14


class ZeroVarianceError(ValueError):
    """All observations coincide; the determination coefficient is undefined."""


@dataclass(frozen=True)
class TimedDataset:
    """Observations (t_i, y_i) on a manifold, sorted by time."""

    manifold: Manifold
    times: np.ndarray            # (n,)
    points: np.ndarray           # (n, *point_shape)
    horizon: float = None        # defaults to the last observation time

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        points = np.asarray(self.points, dtype=float)
        if times.ndim != 1 or len(times) < 1:
            raise ValueError("need at least one observation")
        if points.shape != (len(times),) + self.manifold.point_shape:
            raise ValueError("points do not match the manifold point shape")
        order = np.argsort(times, kind="stable")
        object.__setattr__(self, "times", times[order])
        object.__setattr__(self, "points", points[order])
        horizon = self.horizon
        if horizon is None:
            horizon = float(self.times[-1])
        if horizon < self.times[-1]:
            raise ValueError("horizon precedes the last observation")
        object.__setattr__(self, "horizon", float(horizon))

    @property
    def size(self) -> int:
        return len(self.times)

    def rescaled(self) -> tuple["TimedDataset", float, float]:
        """Copy with times mapped affinely onto [0, 1]; returns (data, t0, scale)."""
        t0 = float(self.times[0])
        span = float(self.times[-1] - self.times[0])
        if span <= 0.0:
            return (
                TimedDataset(self.manifold, np.zeros_like(self.times), self.points,
                             horizon=0.0),
                t0,
                1.0,
            )
        times = (self.times - t0) / span
        return TimedDataset(self.manifold, times, self.points, horizon=1.0), t0, span


@dataclass(frozen=True)
class FitConfig:
    """Knobs of one regression run."""

    order: int
    steps: int = 100              # trajectory nodes per unit of internal time
    max_iters: int = 2000
    step_size: float = 1.0
    tol: float = 1e-6             # on the metric norm of the stacked gradient
    shrink: float = 0.5
    grow: float = 1.2
    step_rule: str = "bb"         # "bb" | "cg" | "fixed"
    validate_every: int = 1

    def __post_init__(self):
        if not (0 <= self.order <= _MAX_ORDER):
            raise ValueError(f"order must be between 0 and {_MAX_ORDER}")
        if min(self.steps, self.max_iters) < 1 or self.step_size <= 0 or self.tol <= 0:
            raise ValueError("steps, max_iters, step_size and tol must be positive")
        if not (0 < self.shrink < 1) or self.grow < 1:
            raise ValueError("need 0 < shrink < 1 and grow >= 1")
        if self.step_rule not in ("bb", "cg", "fixed"):
            raise ValueError("step_rule must be 'bb', 'cg' or 'fixed'")


@dataclass(frozen=True)
class AdjointGradients:
    """Gradients of the objective at t = 0: base point and one per vector."""

    base: np.ndarray
    vels: tuple

    def stacked(self):
        return (self.base,) + tuple(self.vels)


@dataclass
class FitResult:
    """Estimated initial conditions with fit statistics and the descent trace."""

    manifold_name: str
    params: PolynomialState              # internal time units on [0, 1]
    params_original: PolynomialState     # velocities per original time unit
    sse: float
    frechet_variance: float
    r_squared: float
    iterations: int
    converged: bool
    grad_norm: float
    objective_trace: list = field(default_factory=list)
    collinearity: float = None
    time_offset: float = 0.0
    time_scale: float = 1.0
    steps: int = 0


def objective_sse(manifold: Manifold, traj: Trajectory, data: TimedDataset) -> float:
    """Mean squared geodesic distance from the curve to the observations."""
    return _sse_at_nodes(manifold, traj, _snap_nodes(traj, data), data.points)


def _sse_at_nodes(manifold, traj, nodes, points) -> float:
    try:
        dists = manifold.dist_many(traj.points[nodes], points)
    except GeometryError as exc:
        raise GeometryError(f"objective failed on an observation: {exc}") from exc
    return float(np.mean(np.square(dists)))


def _snap_nodes(traj: Trajectory, data: TimedDataset) -> np.ndarray:
    return np.array([traj.node_index(float(t)) for t in data.times], dtype=int)


def integrate_adjoint(manifold: Manifold, traj: Trajectory,
                      data: TimedDataset) -> AdjointGradients:
    """Backward pass along a stored trajectory.

    Walks the trajectory from its final node to the first.  At each node the
    order-zero multiplier absorbs the curvature coupling and any observation
    jump, every multiplier is incremented by its predecessor and the whole
    stack is transported one node backward.  Returns the negated multipliers,
    i.e. the gradients.
    """
    k = traj.order
    n_steps = len(traj) - 1
    dt = traj.dt
    n_obs = data.size

    nodes = _snap_nodes(traj, data)
    jumps = {}
    for idx in np.unique(nodes):
        sel = nodes == idx
        logs = manifold.log_many(
            np.broadcast_to(traj.points[idx], (int(sel.sum()),) + manifold.point_shape),
            data.points[sel],
        )
        jumps[int(idx)] = (2.0 / n_obs) * logs.sum(axis=0)

    lam = np.zeros((k + 1,) + manifold.tangent_shape)
    for n in range(n_steps, 0, -1):
        gamma = traj.points[n]
        vels = traj.vels[n]
        if k:
            w = vels[0]
            lam[0] += dt * np.sum(
                manifold.curvature(gamma, vels, lam[1:], vels[0]), axis=0
            )
        else:
            w = np.zeros(manifold.tangent_shape)
        if n in jumps:
            lam[0] += jumps[n]
        back = -dt * w
        incremented = lam.copy()
        incremented[1:] += dt * lam[:-1]
        lam = manifold.transport(gamma, back, incremented)
        lam = np.asarray(
            manifold.project_tangent(traj.points[n - 1], lam), dtype=float
        )
    if 0 in jumps:
        lam[0] += jumps[0]
    return AdjointGradients(base=-lam[0], vels=tuple(-lam[1:]))


def frechet_mean(manifold: Manifold, points, tol: float = 1e-9,
                 max_iter: int = 200) -> np.ndarray:
    """Minimizer of the mean squared distance, by gradient fixed-point steps."""
    points = np.asarray(points, dtype=float)
    mean = np.array(points[0], dtype=float)
    step = 1.0
    value = float(np.mean(np.square(manifold.dist_many(
        np.broadcast_to(mean, points.shape), points))))
    for _ in range(max_iter):
        logs = manifold.log_many(np.broadcast_to(mean, points.shape), points)
        grad = logs.mean(axis=0)
        if manifold.norm(mean, grad) <= tol:
            return mean
        while step >= 1e-12:
            candidate = manifold.project_point(manifold.exp(mean, step * grad))
            cand_value = float(np.mean(np.square(manifold.dist_many(
                np.broadcast_to(candidate, points.shape), points))))
            if cand_value <= value:
                mean, value = candidate, cand_value
                step = min(1.0, step * 2.0)
                break
            step *= 0.5
        else:
            break
    logs = manifold.log_many(np.broadcast_to(mean, points.shape), points)
    if manifold.norm(mean, logs.mean(axis=0)) > max(tol, 1e-6):
        raise GeometryError("mean iteration did not converge")
    return mean


def frechet_variance(manifold: Manifold, points, mean=None) -> float:
    points = np.asarray(points, dtype=float)
    if mean is None:
        mean = frechet_mean(manifold, points)
    d = manifold.dist_many(np.broadcast_to(mean, points.shape), points)
    return float(np.mean(np.square(d)))


def r_squared(sse: float, variance: float) -> float:
    """Determination coefficient 1 - SSE/variance."""
    if variance <= 0.0:
        raise ZeroVarianceError(
            "total variance is zero (all observations identical)"
        )
    return 1.0 - sse / variance


def fit_polynomial(manifold: Manifold, data: TimedDataset, config: FitConfig,
                   initial: PolynomialState | None = None) -> FitResult:
    """Estimate initial conditions of an order-k curve by descent.

    Starts from the mean of the data with zero vectors unless an explicit
    initial state (in internal [0, 1] time units) is supplied.  Accepted
    iterations never increase the objective.
    """
    k = config.order
    if data.size < k + 1:
        warnings.warn(
            f"only {data.size} observations for order {k}: fit is underdetermined",
            stacklevel=2,
        )
    internal, t0, span = data.rescaled()
    if internal.horizon == 0.0 and k > 0:
        raise ValueError("all observations share one time; only order 0 is defined")

    steps = config.steps if internal.horizon > 0 else 1
    variance_mean = frechet_mean(manifold, internal.points)
    variance = frechet_variance(manifold, internal.points, mean=variance_mean)

    if initial is not None:
        if initial.order != k:
            raise ValueError("initial state order does not match the configuration")
        state = PolynomialState(
            np.asarray(initial.gamma, dtype=float),
            tuple(np.asarray(v, dtype=float) for v in initial.vels),
        )
    else:
        state = PolynomialState(
            variance_mean, tuple(np.zeros(manifold.tangent_shape) for _ in range(k))
        )

    horizon = internal.horizon or 1.0
    nodes = None

    def evaluate(s: PolynomialState):
        nonlocal nodes
        traj = integrate_polynomial(manifold, s, horizon, steps)
        if nodes is None:
            nodes = _snap_nodes(traj, internal)
        return traj, _sse_at_nodes(manifold, traj, nodes, internal.points)

    traj, value = evaluate(state)
    trace = [value]
    eta = config.step_size
    converged = False
    grad_norm = np.inf
    prev_grad = prev_direction = None
    prev_move = None
    iterations = 0

    for iteration in range(config.max_iters):
        grads = integrate_adjoint(manifold, traj, internal)
        grad = np.stack(grads.stacked())            # (k+1, *tangent_shape)
        grad_norm = float(np.sqrt(sum(
            manifold.inner(state.gamma, g, g) for g in grad
        )))
        if grad_norm <= config.tol:
            converged = True
            break

        direction = -grad
        if config.step_rule == "cg" and prev_grad is not None:
            beta = _polak_ribiere(manifold, state.gamma, grad, prev_grad,
                                  prev_direction)
            direction = -grad + beta * prev_direction
        elif config.step_rule == "bb" and prev_grad is not None:
            eta = _barzilai_borwein(manifold, state.gamma, grad, prev_grad,
                                    prev_move, eta, iteration)

        slope = sum(
            manifold.inner(state.gamma, g, d) for g, d in zip(grad, direction)
        )
        if slope >= 0.0:
            # conjugate direction lost descent; restart from the gradient
            direction = -grad
            slope = -grad_norm * grad_norm
        accepted, state_new, traj_new, value_new, eta_used = _line_search(
            manifold, state, direction, slope, eta, value, evaluate, config
        )
        if not accepted:
            break
        iterations = iteration + 1
        if config.validate_every and iterations % config.validate_every == 0:
            worst = max(state_new.residuals(manifold).values(), default=0.0)
            if worst > 1e-6:
                raise GeometryError(
                    f"parameters drifted off the manifold (residual {worst:.3e})"
                )

        move = eta_used * direction[0]
        prev_grad = manifold.project_tangent(
            state_new.gamma, manifold.transport(state.gamma, move, grad)
        )
        prev_direction = manifold.project_tangent(
            state_new.gamma, manifold.transport(state.gamma, move, direction)
        )
        prev_move = eta_used * np.asarray(prev_direction)
        state, traj, value = state_new, traj_new, value_new
        trace.append(value)
        if config.step_rule == "fixed":
            eta = eta_used * config.grow
        elif config.step_rule == "cg":
            eta = eta_used

    sse = value
    if k == 0:
        # the order-zero fit is itself the variance-defining mean
        variance = sse
    r2 = r_squared(sse, variance)

    vels_original = tuple(
        v / span ** i for i, v in enumerate(state.vels, start=1)
    ) if span != 1.0 else state.vels
    collinearity = None
    if k >= 2 and manifold.norm(state.gamma, state.vels[0]) > 0:
        collinearity = collinearity_diagnostic(manifold, state)

    return FitResult(
        manifold_name=manifold.name,
        params=state,
        params_original=PolynomialState(state.gamma, vels_original),
        sse=sse,
        frechet_variance=variance,
        r_squared=r2,
        iterations=iterations,
        converged=converged,
        grad_norm=grad_norm,
        objective_trace=trace,
        collinearity=collinearity,
        time_offset=t0,
        time_scale=span,
        steps=steps,
    )


def fit_orders(manifold: Manifold, data: TimedDataset, orders, config: FitConfig,
               warm_start: bool = True) -> dict:
    """Fit several orders, optionally seeding each from the previous result.

    Warm starting pads the previous optimum with one zero vector, so the
    objective can only improve with the order.
    """
    results = {}
    previous = None
    for k in sorted(orders):
        cfg = FitConfig(**{**config.__dict__, "order": k})
        initial = None
        if warm_start and previous is not None and previous.params.order < k:
            pad = tuple(
                np.zeros(manifold.tangent_shape)
                for _ in range(k - previous.params.order)
            )
            initial = PolynomialState(previous.params.gamma,
                                      previous.params.vels + pad)
        results[k] = fit_polynomial(manifold, data, cfg, initial=initial)
        previous = results[k]
    return results


def _line_search(manifold, state, direction, slope, eta, value, evaluate, config):
    """Backtracking on a strict decrease, with one parabolic refinement."""

    def try_step(e):
        candidate = _retract_state(manifold, state, direction, e)
        traj, val = evaluate(candidate)
        return candidate, traj, val

    e = eta
    while e >= _MIN_LINE_STEP:
        cand, traj, val = try_step(e)
        if val < value:
            if config.step_rule == "cg" and slope < 0:
                denom = 2.0 * (val - value - slope * e)
                if denom > 0:
                    refined = -slope * e * e / denom
                    if 0 < refined:
                        cand2, traj2, val2 = try_step(refined)
                        if val2 < val:
                            return True, cand2, traj2, val2, refined
            return True, cand, traj, val, e
        e *= config.shrink
    return False, state, None, value, 0.0


def _retract_state(manifold, state, direction, eta):
    move = eta * direction[0]
    new_gamma = manifold.project_point(manifold.exp(state.gamma, move))
    if state.order:
        stacked = np.stack([
            v + eta * d for v, d in zip(state.vels, direction[1:])
        ])
        moved = manifold.transport(state.gamma, move, stacked)
        moved = np.asarray(manifold.project_tangent(new_gamma, moved), dtype=float)
        return PolynomialState(new_gamma, tuple(moved))
    return PolynomialState(new_gamma, ())


def _polak_ribiere(manifold, gamma, grad, prev_grad, prev_direction):
    num = sum(
        manifold.inner(gamma, g, g - pg) for g, pg in zip(grad, prev_grad)
    )
    den = sum(manifold.inner(gamma, pg, pg) for pg in prev_grad)
    if den <= 0:
        return 0.0
    return max(0.0, num / den)


def _barzilai_borwein(manifold, gamma, grad, prev_grad, prev_move, eta, iteration):
    s = prev_move
    y = np.asarray(grad) - np.asarray(prev_grad)
    sy = sum(manifold.inner(gamma, a, b) for a, b in zip(s, y))
    if sy <= 0:
        return eta
    if iteration % 2:
        yy = sum(manifold.inner(gamma, b, b) for b in y)
        return sy / yy if yy > 0 else eta
    ss = sum(manifold.inner(gamma, a, a) for a in s)
    return ss / sy
