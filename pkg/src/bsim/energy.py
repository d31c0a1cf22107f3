"""Energy functionals on the surface and their analytic vertex gradients.

Four terms are minimized together:

* tension: sigma times the breast-facet area (surface elasticity),
* gravity: support * g * mass * centroid height of the enclosed content,
  with the height integral evaluated exactly on the piecewise-linear surface
  via the divergence theorem with the quadratic flux field F = (h^2 / 2) m,
* bending: w_b * sum over free vertices of A_i * H_i^2, the discrete total
  squared mean curvature (cotangent H, barycentric A),
* compressibility: (K / 2) * (V - V0)^2 / V0, a soft penalty that lets the
  enclosed volume shrink under load.

All gradients are exact derivatives of the discrete formulas, verified
against central differences by fd_check. Summations are index-ordered so
results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .mesh import TriMesh

STANDARD_GRAVITY = 980.665  # cm/s^2


@dataclass
class EnergySpec:
    """Physical coefficients of the surface model (cgs units).

    sigma : surface tension, erg/cm^2
    rho : content density, g/cm^3
    g : gravitational acceleration, cm/s^2
    g_dir : unit vector, the direction gravity pulls
    w_b : bending (squared-mean-curvature) weight, erg
    K : compressibility modulus, erg/cm^3
    V0 : rest volume, cm^3
    support : factor in [0, 1] multiplying gravity (drape / armpit support)
    """

    sigma: float = 0.0
    rho: float = 1.0
    g: float = STANDARD_GRAVITY
    g_dir: tuple = (0.0, 0.0, -1.0)
    w_b: float = 0.0
    K: float = 0.0
    V0: float = 1.0
    support: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.g_dir, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError("g_dir must be a finite nonzero vector")
        self.g_dir = tuple(d / n)
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")
        if self.rho <= 0.0:
            raise ValueError("rho must be > 0")
        if self.g <= 0.0:
            raise ValueError("g must be > 0")
        if self.w_b < 0.0:
            raise ValueError("w_b must be >= 0")
        if self.K < 0.0:
            raise ValueError("K must be >= 0")
        if self.V0 <= 0.0:
            raise ValueError("V0 must be > 0")
        if not 0.0 <= self.support <= 1.0:
            raise ValueError("support must lie in [0, 1]")

    def with_stage(self, g_dir, support: float) -> "EnergySpec":
        return replace(self, g_dir=tuple(np.asarray(g_dir, dtype=float)), support=support)


# ---------------------------------------------------------------------------
# individual terms


def tension_energy(mesh: TriMesh, spec: EnergySpec) -> float:
    return spec.sigma * mesh.total_area(role="breast")


def _tension_gradient(mesh: TriMesh, spec: EnergySpec, out: np.ndarray):
    if spec.sigma == 0.0:
        return
    sel = ~mesh.cap
    f = mesh.facets[sel]
    v = mesh.vertices
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    cross = np.cross(p1 - p0, p2 - p0)
    nrm = np.linalg.norm(cross, axis=1)
    nhat = cross / np.where(nrm > 0.0, nrm, np.inf)[:, None]
    half = 0.5 * spec.sigma
    np.add.at(out, f[:, 0], half * np.cross(nhat, p2 - p1))
    np.add.at(out, f[:, 1], half * np.cross(nhat, p0 - p2))
    np.add.at(out, f[:, 2], half * np.cross(nhat, p1 - p0))


def _height_integral(mesh: TriMesh, m: np.ndarray) -> float:
    """\\int_V h dV for h = m . x, exact on the PL surface (divergence theorem
    with F = (h^2 / 2) m; per facet \\int h^2 dA is quadratic quadrature)."""
    p0, p1, p2 = mesh.facet_points()
    n = np.cross(p1 - p0, p2 - p0)
    h0, h1, h2 = p0 @ m, p1 @ m, p2 @ m
    quad = h0 * h0 + h1 * h1 + h2 * h2 + h0 * h1 + h1 * h2 + h2 * h0
    return float(np.sum((n @ m) * quad) / 24.0)


def _height_integral_gradient(mesh: TriMesh, m: np.ndarray) -> np.ndarray:
    f = mesh.facets
    p0, p1, p2 = mesh.facet_points()
    n = np.cross(p1 - p0, p2 - p0)
    h0, h1, h2 = p0 @ m, p1 @ m, p2 @ m
    quad = (h0 * h0 + h1 * h1 + h2 * h2 + h0 * h1 + h1 * h2 + h2 * h0)[:, None]
    ndotm = (n @ m)[:, None]
    out = np.zeros_like(mesh.vertices)
    np.add.at(out, f[:, 0], (np.cross(p1 - p2, m) * quad + ndotm * (2 * h0 + h1 + h2)[:, None] * m) / 24.0)
    np.add.at(out, f[:, 1], (np.cross(p2 - p0, m) * quad + ndotm * (2 * h1 + h0 + h2)[:, None] * m) / 24.0)
    np.add.at(out, f[:, 2], (np.cross(p0 - p1, m) * quad + ndotm * (2 * h2 + h0 + h1)[:, None] * m) / 24.0)
    return out


def gravity_energy(mesh: TriMesh, spec: EnergySpec) -> float:
    """Weight potential of the enclosed content at constant mass.

    E = support * g * M * (\\int_V h dV) / V with h = -(g_dir . x) the height
    against gravity and M = rho * V0 the conserved content mass, i.e. mass
    times the centroid height. Keeping the mass constant (the content density
    is mass/volume at any instant) makes the energy independent of the height
    origin; a constant-density form would reward inflating material that
    hangs below the arbitrary h = 0 level.
    """
    c = spec.support * spec.g * spec.rho * spec.V0
    if c == 0.0:
        return 0.0
    m = -np.asarray(spec.g_dir)
    return c * _height_integral(mesh, m) / mesh.enclosed_volume()


def _gravity_gradient(mesh: TriMesh, spec: EnergySpec, out: np.ndarray):
    c = spec.support * spec.g * spec.rho * spec.V0
    if c == 0.0:
        return
    m = -np.asarray(spec.g_dir)
    vol = mesh.enclosed_volume()
    hint = _height_integral(mesh, m)
    out += (c / vol) * _height_integral_gradient(mesh, m)
    out -= (c * hint / (vol * vol)) * mesh.volume_gradient()


def _height_sq_integral(mesh: TriMesh, m: np.ndarray) -> float:
    """\\int_V h^2 dV via the flux field F = (h^3 / 3) m; the facet integral
    \\int h^3 dA is A/10 times the sum of the ten cubic corner monomials."""
    p0, p1, p2 = mesh.facet_points()
    n = np.cross(p1 - p0, p2 - p0)
    h0, h1, h2 = p0 @ m, p1 @ m, p2 @ m
    s3 = (h0 ** 3 + h1 ** 3 + h2 ** 3
          + h0 * h0 * (h1 + h2) + h1 * h1 * (h0 + h2) + h2 * h2 * (h0 + h1)
          + h0 * h1 * h2)
    return float(np.sum((n @ m) * s3) / 60.0)


def _height_sq_integral_gradient(mesh: TriMesh, m: np.ndarray) -> np.ndarray:
    f = mesh.facets
    p0, p1, p2 = mesh.facet_points()
    n = np.cross(p1 - p0, p2 - p0)
    h0, h1, h2 = p0 @ m, p1 @ m, p2 @ m
    s3 = (h0 ** 3 + h1 ** 3 + h2 ** 3
          + h0 * h0 * (h1 + h2) + h1 * h1 * (h0 + h2) + h2 * h2 * (h0 + h1)
          + h0 * h1 * h2)[:, None]
    ndotm = (n @ m)[:, None]
    d0 = (3 * h0 * h0 + 2 * h0 * (h1 + h2) + h1 * h1 + h2 * h2 + h1 * h2)[:, None]
    d1 = (3 * h1 * h1 + 2 * h1 * (h0 + h2) + h0 * h0 + h2 * h2 + h0 * h2)[:, None]
    d2 = (3 * h2 * h2 + 2 * h2 * (h0 + h1) + h0 * h0 + h1 * h1 + h0 * h1)[:, None]
    out = np.zeros_like(mesh.vertices)
    np.add.at(out, f[:, 0], (np.cross(p1 - p2, m) * s3 + ndotm * d0 * m) / 60.0)
    np.add.at(out, f[:, 1], (np.cross(p2 - p0, m) * s3 + ndotm * d1 * m) / 60.0)
    np.add.at(out, f[:, 2], (np.cross(p0 - p1, m) * s3 + ndotm * d2 * m) / 60.0)
    return out


_AXES = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))


def _lateral_spread_sq(mesh: TriMesh, m: np.ndarray) -> tuple[float, float]:
    """(W2, V) with W2 = V^2 * var(content coordinates perpendicular to m).

    var_perp = trace of the content covariance minus the variance along m;
    all moments are exact PL flux integrals.
    """
    v = mesh.enclosed_volume()
    w2 = -(_height_sq_integral(mesh, m) * v - _height_integral(mesh, m) ** 2)
    for e in _AXES:
        w2 += _height_sq_integral(mesh, e) * v - _height_integral(mesh, e) ** 2
    return w2, v


def hydrostatic_energy(mesh: TriMesh, spec: EnergySpec) -> float:
    """Compression work of the carried content weight.

    The skin envelope bears the content mass M = rho * V0. How hard the
    content is loaded shows up as flattening: the mass spreads out
    perpendicular to gravity (a supported dome spreads on its base, a
    breast laid on the table pancakes against it). The mean internal
    pressure is modelled as p = sqrt(3) * support * g * (M / V) * s_perp,
    with s_perp the standard deviation of the content coordinates
    perpendicular to gravity; the stored work p * (V - V0) vanishes at rest
    volume and, against the quadratic penalty, moves the equilibrium to
    V0 * (1 - p / K): heavier loading squeezes volume out, as the
    measurements show from lying to standing to lying-on-table.

    Translation-invariant (only coordinate spreads enter) and co-rotates
    with g_dir.
    """
    c = spec.support * spec.g * spec.rho * spec.V0
    if c == 0.0:
        return 0.0
    w2, v = _lateral_spread_sq(mesh, -np.asarray(spec.g_dir))
    if w2 <= 0.0:
        return 0.0
    return float(np.sqrt(3.0) * c * np.sqrt(w2) * (v - spec.V0) / (v * v))


def _hydrostatic_gradient(mesh: TriMesh, spec: EnergySpec, out: np.ndarray):
    c = spec.support * spec.g * spec.rho * spec.V0
    if c == 0.0:
        return
    m = -np.asarray(spec.g_dir)
    w2, v = _lateral_spread_sq(mesh, m)
    if w2 <= 0.0:
        return
    w = np.sqrt(w2)
    grad_v = mesh.volume_gradient()
    q_eff = -_height_sq_integral(mesh, m)
    grad_q = -_height_sq_integral_gradient(mesh, m)
    grad_w2 = 2.0 * _height_integral(mesh, m) * _height_integral_gradient(mesh, m)
    for e in _AXES:
        q_eff += _height_sq_integral(mesh, e)
        grad_q += _height_sq_integral_gradient(mesh, e)
        grad_w2 -= 2.0 * _height_integral(mesh, e) * _height_integral_gradient(mesh, e)
    grad_w2 += q_eff * grad_v + v * grad_q
    grad_w = grad_w2 / (2.0 * w)
    k = np.sqrt(3.0) * c
    out += k * ((v - spec.V0) / (v * v) * grad_w
                + w * (2.0 * spec.V0 - v) / (v ** 3) * grad_v)


def willmore_energy(mesh: TriMesh, spec: EnergySpec) -> float:
    if spec.w_b == 0.0:
        return 0.0
    L, A = _laplace_vectors(mesh)
    free = mesh.free & (A > 0.0)
    e = np.sum(L[free] * L[free], axis=1) / (16.0 * A[free])
    return float(spec.w_b * np.sum(e))


def _laplace_vectors(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """L_i = sum_j w_ij (x_i - x_j) with cotangent weights; barycentric A_i.

    Note A_i H_i^2 = |L_i|^2 / (16 A_i).
    """
    v, f = mesh.vertices, mesh.facets
    cot = mesh.corner_cotangents()
    L = np.zeros_like(v)
    for c in range(3):
        i = f[:, (c + 1) % 3]
        j = f[:, (c + 2) % 3]
        wd = cot[:, c][:, None] * (v[i] - v[j])
        np.add.at(L, i, wd)
        np.add.at(L, j, -wd)
    return L, mesh.vertex_areas()


def _willmore_gradient(mesh: TriMesh, spec: EnergySpec, out: np.ndarray):
    if spec.w_b == 0.0:
        return
    v, f = mesh.vertices, mesh.facets
    L, A = _laplace_vectors(mesh)
    free = mesh.free & (A > 0.0)
    safe_A = np.where(A > 0.0, A, np.inf)

    # u_i multiplies dL_i, s_i multiplies dA_i; both vanish at fixed vertices
    u = np.where(free[:, None], L / (8.0 * safe_A[:, None]), 0.0)
    s = np.where(free, -np.sum(L * L, axis=1) / (16.0 * safe_A * safe_A), 0.0)

    grad = np.zeros_like(v)
    cot = mesh.corner_cotangents()
    p = v[f]
    for c in range(3):
        i = f[:, (c + 1) % 3]
        j = f[:, (c + 2) % 3]
        k = f[:, c]
        w = cot[:, c][:, None]

        # direct term: d/dx of w_ij (x_i - x_j) against u
        np.add.at(grad, i, w * (u[i] - u[j]))
        np.add.at(grad, j, w * (u[j] - u[i]))

        # cotangent variation: coefficient of d(cot at k)
        coef = np.sum((u[i] - u[j]) * (v[i] - v[j]), axis=1)[:, None]
        a = p[:, (c + 1) % 3] - p[:, c]
        b = p[:, (c + 2) % 3] - p[:, c]
        D = np.sum(a * b, axis=1)[:, None]
        N = np.linalg.norm(np.cross(a, b), axis=1)
        N = np.where(N > 0.0, N, np.inf)[:, None]
        aa = np.sum(a * a, axis=1)[:, None]
        bb = np.sum(b * b, axis=1)[:, None]
        dcot_da = b / N - D * (a * bb - b * D) / N ** 3
        dcot_db = a / N - D * (b * aa - a * D) / N ** 3
        np.add.at(grad, i, coef * dcot_da)
        np.add.at(grad, j, coef * dcot_db)
        np.add.at(grad, k, -coef * (dcot_da + dcot_db))

    # barycentric area variation: dA_t spread to the three corners
    p0, p1, p2 = p[:, 0], p[:, 1], p[:, 2]
    cross = np.cross(p1 - p0, p2 - p0)
    nrm = np.linalg.norm(cross, axis=1)
    nhat = cross / np.where(nrm > 0.0, nrm, np.inf)[:, None]
    q = ((s[f[:, 0]] + s[f[:, 1]] + s[f[:, 2]]) / 3.0)[:, None]
    np.add.at(grad, f[:, 0], q * 0.5 * np.cross(nhat, p2 - p1))
    np.add.at(grad, f[:, 1], q * 0.5 * np.cross(nhat, p0 - p2))
    np.add.at(grad, f[:, 2], q * 0.5 * np.cross(nhat, p1 - p0))

    out += spec.w_b * grad


def volume_energy(mesh: TriMesh, spec: EnergySpec) -> float:
    if spec.K == 0.0:
        return 0.0
    dv = mesh.enclosed_volume() - spec.V0
    return 0.5 * spec.K * dv * dv / spec.V0


def _volume_gradient(mesh: TriMesh, spec: EnergySpec, out: np.ndarray):
    if spec.K == 0.0:
        return
    dv = mesh.enclosed_volume() - spec.V0
    out += (spec.K * dv / spec.V0) * mesh.volume_gradient()


# ---------------------------------------------------------------------------
# totals


def total_energy(mesh: TriMesh, spec: EnergySpec) -> float:
    return (tension_energy(mesh, spec) + gravity_energy(mesh, spec)
            + hydrostatic_energy(mesh, spec)
            + willmore_energy(mesh, spec) + volume_energy(mesh, spec))


def energy_breakdown(mesh: TriMesh, spec: EnergySpec) -> dict:
    return {
        "tension": tension_energy(mesh, spec),
        "gravity": gravity_energy(mesh, spec),
        "hydrostatic": hydrostatic_energy(mesh, spec),
        "bending": willmore_energy(mesh, spec),
        "volume": volume_energy(mesh, spec),
    }


def gradient(mesh: TriMesh, spec: EnergySpec) -> np.ndarray:
    """Analytic d(total energy)/d(vertex positions); zero rows at fixed vertices."""
    out = np.zeros_like(mesh.vertices)
    _tension_gradient(mesh, spec, out)
    _gravity_gradient(mesh, spec, out)
    _hydrostatic_gradient(mesh, spec, out)
    _willmore_gradient(mesh, spec, out)
    _volume_gradient(mesh, spec, out)
    out[mesh.fixed] = 0.0
    return out


def fd_check(mesh: TriMesh, spec: EnergySpec, step: float) -> float:
    """Worst deviation of the analytic gradient from central differences.

    Relative error per component, absolute where |analytic| < 1e-8.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    g = gradient(mesh, spec)
    worst = 0.0
    base = mesh.vertices
    for i in np.where(mesh.free)[0]:
        for c in range(3):
            vp = base.copy()
            vp[i, c] += step
            vm = base.copy()
            vm[i, c] -= step
            fd = (total_energy(mesh.with_vertices(vp), spec)
                  - total_energy(mesh.with_vertices(vm), spec)) / (2.0 * step)
            a = g[i, c]
            err = abs(a - fd) if abs(a) < 1e-8 else abs(a - fd) / abs(a)
            if err > worst:
                worst = err
    return worst
