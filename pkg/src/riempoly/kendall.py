"""Shape space of labelled landmark configurations modulo similarity.

A configuration of m landmarks in R^d is standardized by removing translation
(centroid to the origin) and scale (unit Frobenius norm), which places it on
the unit sphere of dimension m*d - 1.  Shapes are equivalence classes of
standardized configurations under rotation; we always compute with a sphere
representative and keep tangent vectors horizontal, i.e. orthogonal to the
rotation orbits.  Exponential map and parallel transport step along the
sphere and re-project to the horizontal subspace; the log map is iterative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CutLocusError, Manifold, shooting_log
from .sphere import Sphere

# Gram-Schmidt drop threshold for degenerate (e.g. collinear) configurations.
_BASIS_DROP = 1e-10


@dataclass(frozen=True)
class LandmarkConfig:
    """Standardized landmark configuration with its removed similarity part."""

    points: np.ndarray          # (m, d), centered, unit Frobenius norm
    centroid: np.ndarray        # translation removed from the raw input
    scale: float                # Frobenius norm removed from the raw input

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def flat(self) -> np.ndarray:
        return self.points.reshape(-1)


def to_preshape(raw) -> LandmarkConfig:
    """Center and rescale a raw m x d configuration onto the preshape sphere."""
    pts = np.asarray(raw, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("expected an (m, d) array with at least two landmarks")
    if pts.shape[0] * pts.shape[1] < 3:
        raise ValueError("m*d must be at least 3")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    scale = float(np.sqrt(np.sum(centered * centered)))
    if scale < 1e-14:
        raise ValueError("degenerate configuration: all landmarks coincide")
    return LandmarkConfig(points=centered / scale, centroid=centroid, scale=scale)


def procrustes_align(target, base):
    """Rotate target (m x d rows) to minimize Frobenius distance to base.

    Reflections are excluded: the optimal rotation is forced into SO(d) by a
    sign correction on the smallest singular value.
    """
    t = np.asarray(target, dtype=float)
    b = np.asarray(base, dtype=float)
    if t.shape != b.shape:
        raise ValueError("configurations must share m and d")
    rot = _optimal_rotations(t[None], b[None])[0]
    return t @ rot.T


def _optimal_rotations(targets, bases):
    """Batched Kabsch rotations aligning each target onto its base."""
    m = np.einsum("nmj,nmk->njk", bases, targets)
    u, _, vt = np.linalg.svd(m)
    det = np.linalg.det(u @ vt)
    d = np.shape(targets)[-1]
    signs = np.ones((targets.shape[0], d))
    signs[:, -1] = np.sign(det)
    # rotation acting on landmark rows as x -> R x
    return np.einsum("nij,nj,njk->nik", u, signs, vt)


def _align_many(targets, bases):
    rots = _optimal_rotations(targets, bases)
    return np.einsum("nmj,nkj->nmk", targets, rots)


def vertical_basis(points):
    """Orthonormal basis (rows, flattened) of the rotation-orbit directions.

    Spanning vectors come from the elementary skew generators applied to the
    configuration; near-degenerate directions are dropped.
    """
    return _vertical_bases(np.asarray(points, dtype=float)[None])[0]


def _vertical_bases(points_batch):
    """(n, m, d) batch -> (n, n_gen, m*d) orthonormal-or-zero vertical frames."""
    n, m, d = points_batch.shape
    pairs = [(a, b) for a in range(d) for b in range(a + 1, d)]
    gens = np.zeros((n, len(pairs), m, d))
    for idx, (a, b) in enumerate(pairs):
        gens[:, idx, :, a] = points_batch[:, :, b]
        gens[:, idx, :, b] = -points_batch[:, :, a]
    gens = gens.reshape(n, len(pairs), m * d)
    # modified Gram-Schmidt with drop threshold; dropped rows become zero
    for i in range(len(pairs)):
        for j in range(i):
            coef = np.sum(gens[:, i] * gens[:, j], axis=-1, keepdims=True)
            gens[:, i] -= coef * gens[:, j]
        norm = np.sqrt(np.sum(gens[:, i] ** 2, axis=-1, keepdims=True))
        keep = norm > _BASIS_DROP
        gens[:, i] = np.where(keep, gens[:, i] / np.where(keep, norm, 1.0), 0.0)
    return gens


class KendallShapeSpace(Manifold):
    """Shape space of m landmarks in R^d, via preshape-sphere representatives.

    Points are flat vectors of length m*d.  All tangent vectors are kept in
    the horizontal subspace; the similarity group is quotiented out by
    Procrustes alignment wherever two shapes meet (log, dist).
    """

    tolerance = 1e-8

    def __init__(self, m: int, d: int, max_step: float = 5e-3,
                 log_tol: float = 1e-9, log_max_iter: int = 200,
                 log_step: float = 0.5):
        if m * d < 3 or m < 2 or d < 2:
            raise ValueError("need m >= 2 landmarks in dimension d >= 2 with m*d >= 3")
        self.m = m
        self.d = d
        self.max_step = max_step
        self.log_tol = log_tol
        self.log_max_iter = log_max_iter
        self.log_step = log_step
        self.point_shape = (m * d,)
        self.tangent_shape = (m * d,)
        self.name = f"kendall({m},{d})"
        self._sphere = Sphere(m * d - 1)

    # -- shape helpers -------------------------------------------------------

    def _mat(self, flat):
        return np.reshape(flat, np.shape(flat)[:-1] + (self.m, self.d))

    def from_landmarks(self, raw) -> np.ndarray:
        return to_preshape(raw).flat()

    def _vertical_frame(self, p):
        """Orthonormal vertical frame at a single preshape point."""
        if self.d == 2:
            # the single rotation generator of a unit preshape is itself unit
            frame = np.empty_like(p)
            frame[0::2] = p[1::2]
            frame[1::2] = -p[0::2]
            return frame[None]
        return _vertical_bases(self._mat(p)[None])[0]

    def _project_with_frame(self, p, x, frame):
        xm = self._mat(np.asarray(x, dtype=float))
        xm = xm - xm.mean(axis=-2, keepdims=True)
        out = xm.reshape(np.shape(x))
        out = out - np.asarray(np.sum(out * p, axis=-1))[..., None] * p
        for b in frame:
            coef = np.asarray(np.sum(out * b, axis=-1))
            out = out - coef[..., None] * b
        return out

    def horizontal_project(self, p, x):
        """Remove centering, sphere-normal, and vertical components of x.

        Accepts stacked x with a single base point p.
        """
        return self._project_with_frame(p, x, self._vertical_frame(p))

    # -- contract ------------------------------------------------------------

    def _advance(self, gamma, w, h):
        """One sphere substep of the driving velocity; shared by exp/transport."""
        step = h * w
        nxt = self.project_point(self._sphere.exp(gamma, step))
        frame = self._vertical_frame(nxt)
        return nxt, frame, step

    def exp(self, p, v):
        """Stepwise sphere exponential with horizontal re-projection."""
        speed = float(np.sqrt(np.dot(v, v)))
        if speed == 0.0:
            return np.array(p, dtype=float)
        n = max(1, int(np.ceil(speed / self.max_step)))
        h = 1.0 / n
        gamma = np.array(p, dtype=float)
        w = np.array(v, dtype=float)
        for _ in range(n):
            nxt, frame, step = self._advance(gamma, w, h)
            w = self._project_with_frame(
                nxt, self._sphere.transport(gamma, step, w), frame
            )
            gamma = nxt
        return gamma

    def transport(self, p, direction, x):
        """Stepwise sphere transport with horizontal re-projection.

        Accepts stacked x.  Norms are restored after each projection since
        exact transport is an isometry; the remaining error is in direction.
        """
        speed = float(np.sqrt(np.dot(direction, direction)))
        out = np.array(x, dtype=float, copy=True)
        if speed == 0.0:
            return out
        n = max(1, int(np.ceil(speed / self.max_step)))
        h = 1.0 / n
        gamma = np.array(p, dtype=float)
        w = np.array(direction, dtype=float)
        before = np.asarray(np.sqrt(np.sum(out * out, axis=-1)))
        for _ in range(n):
            nxt, frame, step = self._advance(gamma, w, h)
            out = self._project_with_frame(
                nxt, self._sphere.transport(gamma, step, out), frame
            )
            after = np.asarray(np.sqrt(np.sum(out * out, axis=-1)))
            safe = np.maximum(after, 1e-300)
            ratio = np.where(after > 1e-300, before / safe, 1.0)
            out = out * ratio[..., None]
            w = self._project_with_frame(
                nxt, self._sphere.transport(gamma, step, w), frame
            )
            gamma = nxt
        return out

    def log(self, p, q, tol: float | None = None, max_iter: int | None = None):
        """Iterative log map: align, take the sphere log, polish by shooting."""
        if np.array_equal(p, q):
            return np.zeros(self.m * self.d)
        init = self._aligned_log(p, q)
        return shooting_log(
            self, p, q, init,
            step_size=self.log_step,
            tol=self.log_tol if tol is None else tol,
            max_iter=self.log_max_iter if max_iter is None else max_iter,
            endpoint_gap=lambda end, target: self._aligned_log(end, target),
        )

    def _aligned_log(self, p, q):
        """Sphere log toward the Procrustes-aligned representative of q."""
        return self.log_many(p[None], q[None])[0]

    def dist(self, p, q) -> float:
        if np.array_equal(p, q):
            return 0.0
        return float(self.dist_many(p[None], q[None])[0])

    def curvature(self, p, x, y, z):
        """Sphere curvature of horizontal fields, re-projected horizontally."""
        return self.horizontal_project(p, self._sphere.curvature(p, x, y, z))

    def inner(self, p, x, y):
        if np.ndim(x) == 1 and np.ndim(y) == 1:
            return float(np.dot(x, y))
        return np.sum(np.asarray(x) * y, axis=-1)

    def project_point(self, p):
        pm = self._mat(np.asarray(p, dtype=float))
        pm = pm - pm.mean(axis=-2, keepdims=True)
        flat = pm.reshape(np.shape(p))
        norm = np.asarray(np.sqrt(np.sum(flat * flat, axis=-1)))
        return flat / norm[..., None] if flat.ndim > 1 else flat / float(norm)

    def project_tangent(self, p, x):
        return self.horizontal_project(p, x)

    def point_residuals(self, p) -> dict:
        pm = self._mat(np.asarray(p, dtype=float))
        return {
            "centered": float(np.abs(pm.mean(axis=0)).max()),
            "unit_norm": abs(float(np.sqrt(np.sum(pm * pm))) - 1.0),
        }

    def tangent_residuals(self, p, x) -> dict:
        xm = self._mat(np.asarray(x, dtype=float))
        basis = vertical_basis(self._mat(p))
        vertical = 0.0
        for b in basis:
            vertical = max(vertical, abs(float(np.dot(np.asarray(x), b))))
        return {
            "centered": float(np.abs(xm.mean(axis=0)).max()),
            "sphere_tangent": abs(float(np.dot(np.asarray(x), p))),
            "horizontal": vertical,
        }

    def injectivity_radius(self, p) -> float:
        return np.pi / 2.0

    def random_point(self, rng):
        return self.from_landmarks(rng.standard_normal((self.m, self.d)))

    def random_tangent(self, rng, p):
        return self.horizontal_project(p, rng.standard_normal(self.m * self.d))

    # -- batched fast paths ----------------------------------------------------

    def log_many(self, points, targets):
        """Exact quotient log via alignment, batched over matching rows.

        Aligning the target to the base point makes the connecting sphere
        geodesic horizontal, so the horizontal projection of the sphere log
        is the shape-space log; the iterative route in log() agrees with
        this to its shooting tolerance and exists to certify it.
        """
        points = np.asarray(points, dtype=float)
        targets = np.asarray(targets, dtype=float)
        aligned = _align_many(self._mat(targets), self._mat(points))
        aligned = aligned.reshape(targets.shape)
        c = np.sum(points * aligned, axis=-1)
        if np.any(c <= 1e-12):
            raise CutLocusError("shapes are (nearly) maximally remote")
        logs = self._sphere.log_many(points, aligned)
        bases = _vertical_bases(self._mat(points))
        coef = np.einsum("nd,nrd->nr", logs, bases)
        return logs - np.einsum("nr,nrd->nd", coef, bases)

    def dist_many(self, points, targets):
        points = np.asarray(points, dtype=float)
        targets = np.asarray(targets, dtype=float)
        aligned = _align_many(self._mat(targets), self._mat(points))
        aligned = aligned.reshape(targets.shape)
        return self._sphere.dist_many(points, aligned)


def shape_distance(p_config, q_config) -> float:
    """Quotient distance between two landmark configurations of any scale."""
    p = to_preshape(np.asarray(p_config))
    q = to_preshape(np.asarray(q_config))
    if (p.m, p.d) != (q.m, q.d):
        raise ValueError("configurations must share m and d")
    space = KendallShapeSpace(p.m, p.d)
    return space.dist(p.flat(), q.flat())
