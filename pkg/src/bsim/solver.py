"""Projected gradient descent with plane obstacles and optional hard volume.

The descent direction is the negative energy gradient with components that
point out of active obstacle planes projected away (active-set contact
handling), scaled so the largest vertex moves exactly the trial step length.
Backtracking halves the step until the energy strictly decreases; obstacles
are re-enforced after every accepted move, and in hard-volume mode the
enclosed volume is re-projected to the rest volume.

Everything is deterministic: same inputs, bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import EnergySpec, gradient, total_energy
from .errors import MeshError, SolverError
from .mesh import Plane, TriMesh, project_enclosed_volume

CONTACT_TOL = 1e-9  # cm
MIN_STEP = 1e-12    # cm


@dataclass
class Obstacle:
    """One-sided plane constraint: admissible side is (x - point) . normal >= 0."""

    plane: Plane
    label: str = ""


@dataclass
class SolverParams:
    max_iters: int = 500
    step0: float = 0.1          # cm
    shrink: float = 0.5
    grad_tol: float = 1e-3      # erg/cm
    energy_tol: float = 1e-10   # relative, over 10 consecutive iterations
    hard_volume: bool = False
    volume_tol: float = 1e-9    # relative
    maintenance_every: int = 50  # equiangulate + vertex averaging cadence

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if self.step0 <= 0.0 or self.grad_tol <= 0.0 or self.energy_tol <= 0.0 or self.volume_tol <= 0.0:
            raise ValueError("step0 and tolerances must be positive")


@dataclass
class MinimizeReport:
    iters: int
    final_energy: float
    final_grad_norm: float
    converged: bool
    reason: str = ""
    energy_history: list = field(default_factory=list)


def enforce_obstacles(mesh: TriMesh, obstacles: list[Obstacle]) -> tuple[TriMesh, list[np.ndarray]]:
    """Project violating free vertices onto their obstacle planes.

    Returns the feasible mesh and, per obstacle, the active set: indices of
    free vertices within CONTACT_TOL of the plane. A fixed vertex beyond the
    tolerance on the wrong side raises SolverError("infeasible fixed geometry").
    """
    v = mesh.vertices
    moved = None
    active = []
    for obs in obstacles:
        d = obs.plane.signed_distance(v if moved is None else moved)
        bad_fixed = mesh.fixed & (d < -CONTACT_TOL)
        if np.any(bad_fixed):
            raise SolverError(
                f"infeasible fixed geometry: {int(bad_fixed.sum())} fixed vertices behind "
                f"obstacle {obs.label!r}")
        violating = mesh.free & (d < 0.0)
        if np.any(violating):
            if moved is None:
                moved = v.copy()
            moved[violating] -= d[violating, None] * obs.plane.normal
    out = mesh if moved is None else mesh.with_vertices(moved)
    for obs in obstacles:
        d = obs.plane.signed_distance(out.vertices)
        active.append(np.where(out.free & (np.abs(d) <= CONTACT_TOL))[0])
    return out, active


def project_volume(mesh: TriMesh, target: float, tol: float = 1e-9) -> TriMesh:
    """Hard volume constraint: normal displacement by a common Newton scalar."""
    try:
        return project_enclosed_volume(mesh, target, tol=tol)
    except MeshError as exc:
        raise SolverError(str(exc)) from exc


def _descent_direction(mesh: TriMesh, spec: EnergySpec,
                       active: list[np.ndarray], obstacles: list[Obstacle]) -> np.ndarray:
    d = -gradient(mesh, spec)
    for obs, idx in zip(obstacles, active):
        if len(idx) == 0:
            continue
        n = obs.plane.normal
        into = d[idx] @ n
        mask = into < 0.0
        if np.any(mask):
            rows = idx[mask]
            d[rows] -= np.outer(d[rows] @ n, n)
    return d


def step(mesh: TriMesh, spec: EnergySpec, obstacles: list[Obstacle],
         params: SolverParams, energy: float | None = None) -> tuple[TriMesh, float, float]:
    """One projected-gradient step with backtracking.

    Returns (mesh, energy, step_len); step_len 0 means no strictly-decreasing
    move existed down to MIN_STEP (local stationarity). The returned energy is
    never above the input energy.
    """
    mesh, active = enforce_obstacles(mesh, obstacles)
    if params.hard_volume:
        mesh = project_volume(mesh, spec.V0, params.volume_tol)
    e0 = total_energy(mesh, spec) if energy is None else energy
    d = _descent_direction(mesh, spec, active, obstacles)
    dmax = float(np.linalg.norm(d, axis=1).max()) if len(d) else 0.0
    if dmax == 0.0:
        return mesh, e0, 0.0
    t = params.step0
    while t >= MIN_STEP:
        trial = mesh.with_vertices(mesh.vertices + (t / dmax) * d)
        trial, _ = enforce_obstacles(trial, obstacles)
        if params.hard_volume:
            trial = project_volume(trial, spec.V0, params.volume_tol)
        e1 = total_energy(trial, spec)
        if e1 < e0:
            return trial, e1, t
        t *= params.shrink
    return mesh, e0, 0.0


def _grad_norm(mesh: TriMesh, spec: EnergySpec, obstacles: list[Obstacle]) -> float:
    _, active = enforce_obstacles(mesh, obstacles)
    d = _descent_direction(mesh, spec, active, obstacles)
    return float(np.linalg.norm(d))


def minimize(mesh: TriMesh, spec: EnergySpec, obstacles: list[Obstacle],
             params: SolverParams, callback=None) -> tuple[TriMesh, MinimizeReport]:
    """Iterate projected-gradient steps to stationarity.

    Convergence: projected-gradient norm <= grad_tol, or the relative energy
    change stays <= energy_tol for 10 consecutive iterations, or the step
    length underflows (local stationarity). Every maintenance_every
    iterations the mesh is equiangulated and vertex-averaged; the maintenance
    pass is rolled back unless it does not increase the energy, so the energy
    history is non-increasing.
    """
    mesh, _ = enforce_obstacles(mesh, obstacles)
    if params.hard_volume:
        mesh = project_volume(mesh, spec.V0, params.volume_tol)
    energy = total_energy(mesh, spec)
    history = [energy]
    flat_run = 0
    converged = False
    reason = "max_iters"
    it = 0
    for it in range(1, params.max_iters + 1):
        if params.maintenance_every > 0 and it % params.maintenance_every == 0:
            try:
                candidate = mesh.equiangulate().vertex_average()
                candidate, _ = enforce_obstacles(candidate, obstacles)
                if params.hard_volume:
                    candidate = project_volume(candidate, spec.V0, params.volume_tol)
                e_cand = total_energy(candidate, spec)
            except (MeshError, SolverError):
                e_cand = np.inf  # keep the pre-maintenance mesh
            if e_cand <= energy:
                mesh, energy = candidate, e_cand

        mesh, e_new, step_len = step(mesh, spec, obstacles, params, energy)
        rel_change = abs(energy - e_new) / max(abs(energy), 1e-300)
        energy = e_new
        history.append(energy)
        if callback is not None:
            callback(it, mesh, energy)

        if step_len == 0.0:
            converged = True
            reason = "stationary"
            break
        gnorm = _grad_norm(mesh, spec, obstacles)
        if gnorm <= params.grad_tol:
            converged = True
            reason = "grad_tol"
            break
        flat_run = flat_run + 1 if rel_change <= params.energy_tol else 0
        if flat_run >= 10:
            converged = True
            reason = "energy_plateau"
            break

    gnorm = _grad_norm(mesh, spec, obstacles)
    return mesh, MinimizeReport(iters=it, final_energy=energy, final_grad_norm=gnorm,
                                converged=converged, reason=reason, energy_history=history)
