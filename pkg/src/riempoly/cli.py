"""Command-line front end: dataset ingestion, fitting, and report files.

Exit codes: 0 on success, 1 on usage or file errors, 2 when any requested
fit stopped before reaching its convergence tolerance.
"""

from __future__ import annotations

import json
import time as _time
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from .geometry import Euclidean, GeometryError
from .kendall import KendallShapeSpace, procrustes_align, to_preshape
from .landmarks import (
    LandmarkFileRecord,
    LandmarkFormatError,
    parse_landmarks,
    write_landmarks_csv,
)
from .polyflow import PolynomialState, integrate_polynomial, sample_curve
from .regress import FitConfig, FitResult, TimedDataset, fit_orders
from .so3 import MetricSpec, RotationGroup
from .sphere import Sphere

MANIFOLD_CHOICES = ("kendall", "euclidean", "sphere", "so3")


@dataclass(frozen=True)
class RunConfig:
    """Everything one regression run needs."""

    manifold: str
    orders: tuple
    input_path: str
    output_dir: str
    steps: int = 100
    max_iters: int = 2000
    tol: float = 1e-6
    step_size: float = 1.0
    step_rule: str = "bb"
    samples: int = 100
    warm_start: bool = True

    def __post_init__(self):
        if not self.orders:
            raise ValueError("need at least one order")
        if any(k < 0 for k in self.orders):
            raise ValueError("orders must be non-negative")
        if self.manifold not in MANIFOLD_CHOICES:
            raise ValueError(f"manifold must be one of {MANIFOLD_CHOICES}")


def build_dataset(manifold_name: str, records: list):
    """Turn parsed landmark records into a manifold and a timed dataset."""
    if not records:
        raise ValueError("no records")
    m, d = records[0].m, records[0].d
    times = np.array([r.time for r in records], dtype=float)
    if not np.all(np.isfinite(times)):
        raise ValueError("records carry non-finite times (missing AGE in TPS input?)")

    if manifold_name == "kendall":
        manifold = KendallShapeSpace(m, d)
        points = np.stack([to_preshape(r.landmarks).flat() for r in records])
    elif manifold_name == "euclidean":
        manifold = Euclidean(m * d)
        points = np.stack([r.landmarks.reshape(-1) for r in records])
    elif manifold_name == "sphere":
        manifold = Sphere(m * d - 1)
        points = np.stack([r.landmarks.reshape(-1) for r in records])
        norms = np.sqrt(np.sum(points * points, axis=-1))
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ValueError("sphere data must be unit vectors")
        points /= norms[:, None]
    elif manifold_name == "so3":
        if m * d != 9:
            raise ValueError("so3 data needs nine coordinates per record")
        manifold = RotationGroup(MetricSpec(np.eye(3)))
        points = np.stack([r.landmarks.reshape(3, 3) for r in records])
        for i, p in enumerate(points):
            res = manifold.point_residuals(p)
            if max(res.values()) > 1e-6:
                raise ValueError(f"record {i} is not a rotation matrix")
            points[i] = manifold.project_point(p)
    else:
        raise ValueError(f"unknown manifold {manifold_name!r}")

    data = TimedDataset(manifold, times, points)
    ids = [r.id for r in np.array(records, dtype=object)[np.argsort(times, kind="stable")]]
    return manifold, data, ids


def _state_payload(state: PolynomialState) -> dict:
    return {
        "gamma": np.asarray(state.gamma).reshape(-1).tolist(),
        "vels": [np.asarray(v).reshape(-1).tolist() for v in state.vels],
    }


def _fit_payload(result: FitResult) -> dict:
    return {
        "manifold": result.manifold_name,
        "params_internal": _state_payload(result.params),
        "params_original_units": _state_payload(result.params_original),
        "sse": result.sse,
        "frechet_variance": result.frechet_variance,
        "r_squared": result.r_squared,
        "collinearity": result.collinearity,
        "iterations": result.iterations,
        "converged": result.converged,
        "grad_norm": result.grad_norm,
        "objective_trace": result.objective_trace,
        "time_mapping": {
            "offset": result.time_offset,
            "scale": result.time_scale,
            "note": "internal time s in [0, 1]; original time t = offset + scale * s",
        },
        "steps_per_unit_time": result.steps,
    }


def _curve_rows(manifold, result: FitResult, samples: int):
    """Sampled fitted curve in original time units."""
    steps = max(result.steps, 1)
    traj = integrate_polynomial(manifold, result.params, 1.0, steps)
    s_values = np.linspace(0.0, 1.0, samples)
    points = sample_curve(traj, s_values)
    times = result.time_offset + result.time_scale * s_values
    return times, points


def run_regression(cfg: RunConfig):
    """Fit every requested order and write the report files.

    Returns (results, exit_code); exit code 2 flags any non-converged fit.
    """
    records = parse_landmarks(cfg.input_path)
    manifold, data, ids = build_dataset(cfg.manifold, records)

    fit_cfg = FitConfig(
        order=0,
        steps=cfg.steps,
        max_iters=cfg.max_iters,
        tol=cfg.tol,
        step_size=cfg.step_size,
        step_rule=cfg.step_rule,
    )
    started = _time.perf_counter()
    results = fit_orders(manifold, data, cfg.orders, fit_cfg,
                         warm_start=cfg.warm_start)
    elapsed = _time.perf_counter() - started

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    payload = {
        "input": str(cfg.input_path),
        "manifold": cfg.manifold,
        "observations": data.size,
        "orders": list(cfg.orders),
        "config": {
            "steps": cfg.steps,
            "max_iters": cfg.max_iters,
            "tol": cfg.tol,
            "step_size": cfg.step_size,
            "step_rule": cfg.step_rule,
            "warm_start": cfg.warm_start,
        },
        "elapsed_seconds": elapsed,
        "fits": {str(k): _fit_payload(r) for k, r in sorted(results.items())},
    }
    (outdir / "fit.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    _write_curves(outdir / "curves.csv", manifold, results, cfg.samples)
    _write_residuals(outdir / "residuals.csv", manifold, results, data, ids)

    code = 0 if all(r.converged for r in results.values()) else 2
    return results, code


def _coord_header(dim: int) -> list:
    return [f"c{i + 1}" for i in range(dim)]


def _write_curves(path, manifold, results: dict, samples: int) -> None:
    dim = int(np.prod(manifold.point_shape))
    rows = [",".join(["order", "time"] + _coord_header(dim))]
    for k, result in sorted(results.items()):
        times, points = _curve_rows(manifold, result, samples)
        for t, p in zip(times, points):
            cells = [str(k), repr(float(t))]
            cells += [repr(float(v)) for v in np.asarray(p).reshape(-1)]
            rows.append(",".join(cells))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def _write_residuals(path, manifold, results: dict, data: TimedDataset, ids) -> None:
    rows = ["order,id,time,distance"]
    for k, result in sorted(results.items()):
        steps = max(result.steps, 1)
        traj = integrate_polynomial(manifold, result.params, 1.0, steps)
        span = result.time_scale if result.time_scale else 1.0
        internal_times = (data.times - result.time_offset) / span
        nodes = [traj.node_index(float(s)) for s in internal_times]
        dists = manifold.dist_many(traj.points[nodes], data.points)
        for rec_id, t, dist in zip(ids, data.times, dists):
            rows.append(f"{k},{rec_id},{repr(float(t))},{repr(float(dist))}")
    # one row per observation and order, distances in shape/metric units
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def emit_plot_data(manifold, result: FitResult, data: TimedDataset,
                   samples: int) -> dict:
    """Plot-ready bundle: fitted polylines plus the observation scatter.

    Rows are plain lists ready for CSV; the time column doubles as the
    age-color key.  Shape-space observations are rotated onto the fitted
    curve for display (the fit itself never pre-aligns).
    """
    if not result.converged:
        raise ValueError("refusing to plot a non-converged fit")
    if samples < 2:
        raise ValueError("need at least two samples")
    times, points = _curve_rows(manifold, result, samples)
    curve_rows = [
        [float(t)] + [float(v) for v in np.asarray(p).reshape(-1)]
        for t, p in zip(times, points)
    ]
    obs_points = data.points
    if isinstance(manifold, KendallShapeSpace):
        span = result.time_scale or 1.0
        obs_points = []
        for t, y in zip(data.times, data.points):
            s = min(max((t - result.time_offset) / span, 0.0), 1.0)
            anchor = points[int(round(s * (samples - 1)))]
            aligned = procrustes_align(y.reshape(manifold.m, manifold.d),
                                       anchor.reshape(manifold.m, manifold.d))
            obs_points.append(aligned.reshape(-1))
    obs_rows = [
        [float(t)] + [float(v) for v in np.asarray(p).reshape(-1)]
        for t, p in zip(data.times, obs_points)
    ]
    dim = int(np.prod(manifold.point_shape))
    return {
        "header": ["kind", "time"] + _coord_header(dim),
        "curve": curve_rows,
        "observations": obs_rows,
    }


def write_plot_bundle(path, bundle: dict) -> None:
    rows = [",".join(bundle["header"])]
    for kind in ("curve", "observations"):
        for row in bundle[kind]:
            rows.append(",".join([kind] + [repr(v) for v in row]))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


# -- click wiring -------------------------------------------------------------


@click.group(name="riempoly")
def cli():
    """Intrinsic polynomial regression for manifold-valued data."""


@cli.command("fit")
@click.option("--manifold", type=click.Choice(MANIFOLD_CHOICES), default="kendall",
              show_default=True)
@click.option("--orders", default="0,1,2,3", show_default=True,
              help="Comma-separated polynomial orders to fit.")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "output_dir", required=True, type=click.Path(file_okay=False))
@click.option("--steps", default=100, show_default=True,
              help="Trajectory steps per unit of (rescaled) time.")
@click.option("--max-iters", default=2000, show_default=True)
@click.option("--tol", default=1e-6, show_default=True)
@click.option("--step-size", default=1.0, show_default=True)
@click.option("--step-rule", type=click.Choice(["bb", "cg", "fixed"]), default="bb",
              show_default=True)
@click.option("--samples", default=100, show_default=True,
              help="Points per fitted curve in curves.csv.")
@click.option("--cold-start", is_flag=True,
              help="Start every order from the mean instead of cascading.")
@click.option("--plot-data/--no-plot-data", default=True, show_default=True,
              help="Also write plot_data.csv for the highest converged order.")
def fit_command(manifold, orders, input_path, output_dir, steps, max_iters, tol,
                step_size, step_rule, samples, cold_start, plot_data):
    """Fit polynomial trends to a timed landmark dataset."""
    try:
        order_list = tuple(int(tok) for tok in orders.split(",") if tok.strip())
        cfg = RunConfig(
            manifold=manifold,
            orders=order_list,
            input_path=input_path,
            output_dir=output_dir,
            steps=steps,
            max_iters=max_iters,
            tol=tol,
            step_size=step_size,
            step_rule=step_rule,
            samples=samples,
            warm_start=not cold_start,
        )
        results, code = run_regression(cfg)
    except (ValueError, OSError, LandmarkFormatError, GeometryError) as exc:
        raise click.ClickException(str(exc))

    for k, result in sorted(results.items()):
        click.echo(
            f"order {k}: r_squared={result.r_squared:.4f} sse={result.sse:.6g} "
            f"iterations={result.iterations} converged={result.converged}"
        )
    if plot_data:
        best = max(
            (k for k, r in results.items() if r.converged), default=None
        )
        if best is not None:
            records = parse_landmarks(cfg.input_path)
            manifold_obj, data, _ = build_dataset(cfg.manifold, records)
            bundle = emit_plot_data(manifold_obj, results[best], data, cfg.samples)
            write_plot_bundle(Path(output_dir) / "plot_data.csv", bundle)
    return code


@cli.command("convert-tps")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--ages", default=None,
              help="Comma-separated times assigned cyclically to records that "
                   "lack an AGE/TIME attribute.")
def convert_tps_command(input_path, output_path, ages):
    """Convert a TPS landmark file to the canonical CSV layout."""
    try:
        records = parse_landmarks(input_path, fmt="tps")
        if ages is not None:
            cycle = [float(tok) for tok in ages.split(",") if tok.strip()]
            if not cycle:
                raise ValueError("--ages is empty")
            records = [
                LandmarkFileRecord(
                    id=rec.id,
                    time=cycle[i % len(cycle)] if not np.isfinite(rec.time) else rec.time,
                    landmarks=rec.landmarks,
                )
                for i, rec in enumerate(records)
            ]
        bad = [i for i, rec in enumerate(records) if not np.isfinite(rec.time)]
        if bad:
            raise ValueError(
                f"record {bad[0]} has no AGE/TIME attribute; pass --ages"
            )
        write_landmarks_csv(records, output_path)
    except (ValueError, OSError, LandmarkFormatError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {len(records)} records to {output_path}")
    return 0


@cli.command("simulate")
@click.option("--manifold", type=click.Choice(["sphere"]), default="sphere",
              show_default=True)
@click.option("--order", default=3, show_default=True)
@click.option("--out", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--steps", default=400, show_default=True)
def simulate_command(manifold, order, output_path, steps):
    """Write sample curves of orders 1..order from one base point.

    The initial conditions are nested: every curve shares the lower-order
    vectors and adds one more, so the family visibly fans out.
    """
    try:
        if order < 1:
            raise ValueError("order must be >= 1")
        sphere = Sphere(2)
        base = np.array([1.0, 0.0, 0.0])
        seed_vels = [
            np.array([0.0, 1.6, 0.0]),
            np.array([0.0, 0.0, 2.4]),
            np.array([0.0, -3.0, 1.5]),
        ]
        while len(seed_vels) < order:
            seed_vels.append(np.roll(seed_vels[-1], 1) * 0.5)
        rows = ["order,time,x,y,z"]
        for k in range(1, order + 1):
            state = PolynomialState(base, tuple(
                sphere.project_tangent(base, v) for v in seed_vels[:k]
            ))
            traj = integrate_polynomial(sphere, state, 1.0, steps)
            for t, p in zip(traj.times, traj.points):
                rows.append(
                    ",".join([str(k), repr(float(t))] + [repr(float(v)) for v in p])
                )
        Path(output_path).write_text("\n".join(rows) + "\n", encoding="utf-8")
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote curves of orders 1..{order} to {output_path}")
    return 0


def main(argv=None) -> int:
    """Console entry point with the documented exit codes."""
    try:
        code = cli.main(args=argv, standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    return int(code) if isinstance(code, int) else 0


if __name__ == "__main__":
    raise SystemExit(main())
