"""Stage pipeline and automatic calibration.

The pipeline builds the initial supine mesh and chains the stages
SRG -> STU -> LAT, each starting from the previous equilibrium, producing a
tape-measure report per stage. Calibration wraps the pipeline in a
deterministic bounded Nelder-Mead search that tunes a subset of
{sigma, w_b, K, support_SRG, d_table} against measured targets; its residual
is the weighted sum of squared relative errors, so lengths and volumes mix
dimensionlessly.

Predefined nodule trajectories (from phantom experiments) are a reporting
channel only: they are compared against passive surface advection and never
feed back into the physics.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .anatomy import (Anthropometry, BreastBuild, StageConfig, STAGES,
                      build_initial_breast, build_thorax, stage_config)
from .energy import EnergySpec
from .errors import ConfigError
from .mesh import TriMesh
from .solver import MinimizeReport, SolverParams, minimize
from .tmr import MeasurementReport, report

CALIBRATABLE = ("sigma", "w_b", "K", "support_SRG", "d_table")

METRICS = {
    "volume_cm3": lambda r: r.volume_cm3,
    "area_cm2": lambda r: r.area_cm2,
    "base_perim_cm": lambda r: r.base_perimeter_cm,
    "h_left_cm": lambda r: r.semi_arcs["h_left"],
    "h_right_cm": lambda r: r.semi_arcs["h_right"],
    "v_bottom_cm": lambda r: r.semi_arcs["v_bottom"],
    "v_top_cm": lambda r: r.semi_arcs["v_top"],
}


@dataclass
class Target:
    stage: str
    metric: str
    value: float
    weight: float = 1.0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r} (expected one of {sorted(METRICS)})")
        if self.value <= 0.0:
            raise ValueError("target value must be positive (relative residuals)")
        if self.weight < 0.0:
            raise ValueError("target weight must be >= 0")


@dataclass
class CalibrationProblem:
    free: dict            # name -> (lower, upper)
    targets: list         # of Target
    tolerance: float = 0.02
    max_evaluations: int = 200

    def __post_init__(self):
        if not self.targets:
            raise ValueError("calibration needs at least one target")
        for name, (lo, hi) in self.free.items():
            if name not in CALIBRATABLE:
                raise ValueError(f"unknown free parameter {name!r} (expected subset of {CALIBRATABLE})")
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"bounds for {name!r} must be finite with lower < upper")


@dataclass
class Trajectory:
    """Predefined marker keyframes: label -> ordered [(stage, position), ...]."""

    keyframes: dict = field(default_factory=dict)

    def __post_init__(self):
        for label, frames in self.keyframes.items():
            order = [STAGES.index(s) for s, _ in frames]
            if order != sorted(order) or len(set(order)) != len(order):
                raise ConfigError(f"trajectory for {label!r} lists stages out of pipeline order")
            for _, p in frames:
                if not np.all(np.isfinite(np.asarray(p, dtype=float))):
                    raise ConfigError(f"trajectory for {label!r} has a non-finite position")

    def position_at(self, label: str, stage: str):
        """Latest keyframe at or before the stage, or None."""
        frames = self.keyframes.get(label)
        if not frames:
            return None
        limit = STAGES.index(stage)
        best = None
        for s, p in frames:
            if STAGES.index(s) <= limit:
                best = np.asarray(p, dtype=float)
        return best


@dataclass
class MarkerTrack:
    advected: tuple
    predefined: tuple | None = None


@dataclass
class PipelineResult:
    reports: list
    meshes: dict
    solver_reports: dict
    markers: dict   # stage -> label -> MarkerTrack
    build: BreastBuild


def apply_trajectory(advected: dict, trajectory: Trajectory | None, stage: str) -> dict:
    """Pair each advected marker position with its predefined keyframe."""
    out = {}
    for label, pos in advected.items():
        pre = trajectory.position_at(label, stage) if trajectory else None
        out[label] = MarkerTrack(advected=tuple(pos),
                                 predefined=None if pre is None else tuple(pre))
    return out


def run_stage(mesh: TriMesh, stage: StageConfig, spec: EnergySpec,
              params: SolverParams, mass: float, thorax) -> tuple[TriMesh, MeasurementReport, MinimizeReport]:
    """Minimize under the stage's gravity/support/obstacles and measure."""
    stage_spec = spec.with_stage(stage.g_dir, stage.support)
    settled, solve_rep = minimize(mesh, stage_spec, stage.obstacles, params)
    return settled, report(settled, stage, mass, thorax), solve_rep


def run_pipeline(anthro: Anthropometry, spec: EnergySpec, params: SolverParams,
                 stages=STAGES, stage_overrides: dict | None = None,
                 markers: dict | None = None, trajectory: Trajectory | None = None,
                 edge_target: float = 1.4) -> PipelineResult:
    """Build the initial mesh and chain the requested stages in order."""
    overrides = dict(stage_overrides or {})
    build = build_initial_breast(anthro, edge_target=edge_target)
    thorax, wall = build_thorax(anthro)
    mesh = build.mesh
    for label, point in (markers or {}).items():
        mesh.attach_marker(point, label)

    reports = []
    meshes = {}
    solver_reports = {}
    marker_log = {}
    for sid in stages:
        cfg = stage_config(sid, anthro, thorax, wall, build.apex_height,
                           overrides.get(sid))
        mesh, rep, solve_rep = run_stage(mesh, cfg, spec, params,
                                         anthro.breast_mass, thorax)
        reports.append(rep)
        meshes[sid] = mesh
        solver_reports[sid] = solve_rep
        advected = {mk.label: mesh.marker_position(mk) for mk in mesh.markers}
        marker_log[sid] = apply_trajectory(advected, trajectory, sid)
    return PipelineResult(reports=reports, meshes=meshes,
                          solver_reports=solver_reports, markers=marker_log,
                          build=build)


# ---------------------------------------------------------------------------
# calibration


@dataclass
class CalibrationResult:
    spec: EnergySpec
    stage_overrides: dict
    residual: float
    evaluations: int
    converged: bool


def _apply_free_params(base_spec: EnergySpec, base_overrides: dict,
                       names: list[str], values) -> tuple[EnergySpec, dict]:
    kw = {}
    overrides = {k: dict(v) for k, v in base_overrides.items()}
    for name, value in zip(names, values):
        value = float(value)
        if name == "support_SRG":
            overrides.setdefault("SRG", {})["support"] = value
        elif name == "d_table":
            overrides.setdefault("LAT", {})["d_table"] = value
        else:
            kw[name] = value
    return replace(base_spec, **kw), overrides


def _residual(reports: list, targets: list) -> float:
    by_stage = {r.stage: r for r in reports}
    total = 0.0
    for t in targets:
        rep = by_stage.get(t.stage)
        if rep is None:
            raise ValueError(f"target references stage {t.stage!r} not in the pipeline")
        measured = METRICS[t.metric](rep)
        total += t.weight * ((measured - t.value) / t.value) ** 2
    return total


def calibrate(anthro: Anthropometry, problem: CalibrationProblem,
              spec: EnergySpec, params: SolverParams,
              stages=STAGES, stage_overrides: dict | None = None,
              edge_target: float = 1.4) -> CalibrationResult:
    """Bounded Nelder-Mead over the free parameters.

    Deterministic: the initial simplex sits at the bound midpoint with one
    vertex shifted +10% of the bound range per axis, candidates are clamped
    into bounds, and ties resolve by evaluation order. Stops when the
    residual drops to tolerance^2, when the simplex diameter shrinks below
    1e-4 of the bound range, or when the evaluation budget runs out
    (converged=False, best-so-far returned).
    """
    base_overrides = {k: dict(v) for k, v in (stage_overrides or {}).items()}
    names = sorted(problem.free)
    if not names:
        result = run_pipeline(anthro, spec, params, stages, base_overrides,
                              edge_target=edge_target)
        resid = _residual(result.reports, problem.targets)
        return CalibrationResult(spec=spec, stage_overrides=base_overrides,
                                 residual=resid, evaluations=1,
                                 converged=resid <= problem.tolerance ** 2)

    lo = np.array([problem.free[n][0] for n in names])
    hi = np.array([problem.free[n][1] for n in names])
    span = hi - lo
    evaluations = 0

    def objective(x) -> float:
        nonlocal evaluations
        evaluations += 1
        s, ov = _apply_free_params(spec, base_overrides, names, x)
        result = run_pipeline(anthro, s, params, stages, ov, edge_target=edge_target)
        return _residual(result.reports, problem.targets)

    clamp = lambda x: np.minimum(np.maximum(x, lo), hi)
    n = len(names)
    mid = 0.5 * (lo + hi)
    simplex = [clamp(mid)]
    for i in range(n):
        v = mid.copy()
        v[i] += 0.1 * span[i]
        simplex.append(clamp(v))
    simplex = np.asarray(simplex)

    budget = problem.max_evaluations
    values = np.array([objective(x) for x in simplex[: budget]])
    if len(values) < len(simplex):  # budget too small to even start
        best = int(np.argmin(values))
        s, ov = _apply_free_params(spec, base_overrides, names, simplex[best])
        return CalibrationResult(s, ov, float(values[best]), evaluations, False)

    alpha, gamma, rho, sigma_s = 1.0, 2.0, 0.5, 0.5
    tol2 = problem.tolerance ** 2
    converged = False
    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        if values[0] <= tol2:
            converged = True
            break
        diameter = np.max(np.abs(simplex - simplex[0]) / span)
        if diameter < 1e-4:
            converged = True
            break
        if evaluations >= budget:
            break

        centroid = simplex[:-1].mean(axis=0)
        reflected = clamp(centroid + alpha * (centroid - simplex[-1]))
        f_r = objective(reflected)
        if f_r < values[0]:
            if evaluations < budget:
                expanded = clamp(centroid + gamma * (reflected - centroid))
                f_e = objective(expanded)
                if f_e < f_r:
                    simplex[-1], values[-1] = expanded, f_e
                    continue
            simplex[-1], values[-1] = reflected, f_r
            continue
        if f_r < values[-2]:
            simplex[-1], values[-1] = reflected, f_r
            continue
        if evaluations >= budget:
            break
        if f_r < values[-1]:
            contracted = clamp(centroid + rho * (reflected - centroid))
        else:
            contracted = clamp(centroid + rho * (simplex[-1] - centroid))
        f_c = objective(contracted)
        if f_c < min(f_r, values[-1]):
            simplex[-1], values[-1] = contracted, f_c
            continue
        # shrink toward the best vertex
        for i in range(1, len(simplex)):
            if evaluations >= budget:
                break
            simplex[i] = clamp(simplex[0] + sigma_s * (simplex[i] - simplex[0]))
            values[i] = objective(simplex[i])

    best = int(np.argmin(values))
    best_spec, best_overrides = _apply_free_params(spec, base_overrides, names, simplex[best])
    return CalibrationResult(spec=best_spec, stage_overrides=best_overrides,
                             residual=float(values[best]), evaluations=evaluations,
                             converged=converged)
