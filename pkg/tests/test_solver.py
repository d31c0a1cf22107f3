import numpy as np
import pytest

from bsim.energy import EnergySpec, total_energy
from bsim.errors import SolverError
from bsim.mesh import Plane, TriMesh
from bsim.shapes import icosphere
from bsim.solver import (Obstacle, SolverParams, enforce_obstacles, minimize,
                         project_volume, step)

TABLE = Obstacle(Plane([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]), label="table")


def ball_above(z0: float, level: int = 2):
    m = icosphere(level)
    return m.with_vertices(m.vertices + np.array([0.0, 0.0, z0]))


def perturbed(seed: int, level: int = 2, amplitude: float = 0.05):
    rng = np.random.default_rng(seed)
    m = icosphere(level)
    return m.with_vertices(m.vertices * (1 + amplitude * rng.uniform(-1, 1, (m.n_vertices, 1))))


# ---------------------------------------------------------------- obstacles

def test_enforce_noop_when_feasible():
    m = ball_above(2.0)
    out, active = enforce_obstacles(m, [TABLE])
    assert out is m
    assert all(len(a) == 0 for a in active)


def test_enforce_projects_violators():
    m = ball_above(0.7)  # bottom at z = -0.3
    out, active = enforce_obstacles(m, [TABLE])
    d = TABLE.plane.signed_distance(out.vertices)
    assert d.min() >= -1e-15
    low = np.where(np.abs(d) <= 1e-9)[0]
    assert len(low) > 0
    assert set(low).issubset(set(active[0]))
    # untouched coordinates keep their x, y
    moved = np.where(TABLE.plane.signed_distance(m.vertices) < 0)[0]
    assert np.allclose(out.vertices[moved, :2], m.vertices[moved, :2])


def test_enforce_vertex_exactly_on_plane():
    m = ball_above(1.0)  # south pole exactly at z = 0
    out, active = enforce_obstacles(m, [TABLE])
    assert np.array_equal(out.vertices, m.vertices)
    pole = int(np.argmin(m.vertices[:, 2]))
    assert pole in active[0]


def test_enforce_infeasible_fixed_geometry():
    m = ball_above(0.5)
    fixed = np.zeros(m.n_vertices, bool)
    fixed[np.argmin(m.vertices[:, 2])] = True
    bad = TriMesh(m.vertices, m.facets, fixed=fixed)
    with pytest.raises(SolverError, match="infeasible fixed geometry"):
        enforce_obstacles(bad, [TABLE])


# ---------------------------------------------------------------- volume projection

def test_project_volume_noop_within_tol():
    m = icosphere(1)
    v = m.enclosed_volume()
    assert project_volume(m, v * (1 + 1e-12)) is m


def test_project_volume_reaches_target():
    m = perturbed(3)
    out = project_volume(m, 1.1 * m.enclosed_volume())
    assert out.enclosed_volume() == pytest.approx(1.1 * m.enclosed_volume(), rel=1e-9)


# ---------------------------------------------------------------- single step

def test_step_zero_gradient():
    m = icosphere(1)
    spec = EnergySpec(sigma=0.0, w_b=0.0, K=0.0, support=0.0)
    out, e, slen = step(m, spec, [], SolverParams())
    assert slen == 0.0
    assert np.array_equal(out.vertices, m.vertices)
    assert e == 0.0


def test_step_decreases_energy():
    m = perturbed(1)
    spec = EnergySpec(sigma=1.0, support=0.0, V0=m.enclosed_volume())
    params = SolverParams(hard_volume=True)
    e0 = total_energy(m, spec)
    out, e1, slen = step(m, spec, [], params)
    assert slen > 0.0
    assert e1 < e0
    assert out.enclosed_volume() == pytest.approx(spec.V0, rel=1e-9)


def test_step_respects_table():
    m = ball_above(0.95)
    spec = EnergySpec(sigma=0.5, rho=1.0, g=980.665, g_dir=(0, 0, -1),
                      K=2000.0, V0=m.enclosed_volume())
    out, e, slen = step(m, spec, [TABLE], SolverParams(step0=0.05))
    assert TABLE.plane.signed_distance(out.vertices).min() >= -1e-9


# ---------------------------------------------------------------- minimize

def test_minimize_isoperimetric_quick():
    m = perturbed(7, level=2, amplitude=0.1)
    v0 = 4.0 * np.pi / 3.0
    spec = EnergySpec(sigma=1.0, support=0.0, V0=v0)
    params = SolverParams(max_iters=2000, step0=0.05, grad_tol=1e-4,
                          hard_volume=True, energy_tol=1e-12)
    out, rep = minimize(m, spec, [], params)
    # isoperimetric optimum: area (36 pi V^2)^(1/3) = 4 pi for V = 4 pi / 3
    assert out.total_area() == pytest.approx(4.0 * np.pi, rel=0.005)
    assert np.all(np.diff(rep.energy_history) <= 0.0)
    assert out.enclosed_volume() == pytest.approx(v0, rel=1e-9)


def test_minimize_restart_at_minimum_is_stable():
    m = perturbed(2, amplitude=0.05)
    spec = EnergySpec(sigma=1.0, support=0.0, V0=m.enclosed_volume())
    params = SolverParams(max_iters=1500, step0=0.05, grad_tol=2e-4, hard_volume=True)
    settled, rep1 = minimize(m, spec, [], params)
    assert rep1.converged
    again, rep2 = minimize(settled, spec, [], SolverParams(
        max_iters=200, step0=0.05, grad_tol=2e-4, hard_volume=True, maintenance_every=0))
    assert rep2.converged
    assert rep2.iters <= 10
    assert np.abs(again.vertices - settled.vertices).max() < 1e-4


def test_minimize_ball_on_table_under_gravity():
    m = ball_above(1.0, level=2)
    spec = EnergySpec(sigma=20.0, rho=1.0, g=980.665, g_dir=(0, 0, -1),
                      K=5e4, V0=m.enclosed_volume())
    params = SolverParams(max_iters=400, step0=0.02, grad_tol=1e-2)
    feas_worst = []

    def check(it, mesh, energy):
        feas_worst.append(TABLE.plane.signed_distance(mesh.vertices).min())

    out, rep = minimize(m, spec, [TABLE], params, callback=check)
    assert min(feas_worst) >= -1e-9
    assert np.all(np.diff(rep.energy_history) <= 0.0)
    # the ball settles onto the plane: some vertices in contact
    d = TABLE.plane.signed_distance(out.vertices)
    assert (np.abs(d) <= 1e-9).sum() > 0
    # squeezed: volume strictly below rest volume
    assert out.enclosed_volume() < spec.V0


def test_minimize_deterministic():
    m = perturbed(11, amplitude=0.08)
    spec = EnergySpec(sigma=1.0, rho=1.0, g=980.665, g_dir=(0, 0, -1),
                      w_b=0.5, K=300.0, V0=m.enclosed_volume(), support=0.4)
    params = SolverParams(max_iters=120, step0=0.03, grad_tol=1e-6)
    out1, rep1 = minimize(m.copy(), spec, [TABLE], params)
    out2, rep2 = minimize(m.copy(), spec, [TABLE], params)
    assert np.array_equal(out1.vertices, out2.vertices)
    assert rep1.energy_history == rep2.energy_history


def test_minimize_hard_volume_every_iteration():
    m = perturbed(4, amplitude=0.1)
    v0 = m.enclosed_volume()
    spec = EnergySpec(sigma=1.0, support=0.0, V0=v0)
    params = SolverParams(max_iters=60, step0=0.05, hard_volume=True)

    def check(it, mesh, energy):
        assert mesh.enclosed_volume() == pytest.approx(v0, rel=1e-9)

    minimize(m, spec, [], params, callback=check)


def test_params_validation():
    with pytest.raises(ValueError):
        SolverParams(shrink=1.0)
    with pytest.raises(ValueError):
        SolverParams(max_iters=0)
    with pytest.raises(ValueError):
        SolverParams(step0=-1.0)
