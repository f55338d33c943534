import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import special

from motility.elliptic import (
    DIRICHLET,
    NEUMANN,
    DiskModeSolver,
    MappedDisk,
    MappedPotentialSolver,
    ResolutionError,
    SingularOperatorError,
    drop_nyquist,
    s_phi,
    solve_mode_bvp,
    solve_phi_on_disk,
)
from motility.geometry import BoundaryShape, ModelParams, PolarField, PolarGrid, area


def _poly_case(n, zeta, R, n_r):
    # L_n r^(n+2j) = ((n+2j)^2 - n^2) r^(n+2j-2)
    r = np.linspace(0, R, n_r + 1)
    u = r**n + r ** (n + 2) + r ** (n + 4)
    f = (4 * n + 4) * r**n + (8 * n + 16) * r ** (n + 2) - zeta * u
    du = (n * R ** (n - 1) if n else 0.0) + (n + 2) * R ** (n + 1) + (n + 4) * R ** (n + 3)
    return r, u, f, du


@pytest.mark.parametrize("n", [0, 1, 2, 5])
@pytest.mark.parametrize("kind", [DIRICHLET, NEUMANN])
def test_mode_bvp_second_order(n, kind):
    errs = []
    for n_r in (64, 128):
        r, u, f, du = _poly_case(n, 1.5, 1.3, n_r)
        bc = u[-1] if kind == DIRICHLET else du
        sol = solve_mode_bvp(n, 1.5, f, kind, bc, R=1.3)
        errs.append(np.max(np.abs(sol.values - u)) / np.max(np.abs(u)))
    assert errs[1] < 1e-3
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.3)


def test_mode_bvp_bessel_oracle():
    zeta, R = 2.0, 1.7
    k = math.sqrt(zeta)
    sol = solve_mode_bvp(1, zeta, np.zeros(1025), DIRICHLET, special.iv(1, k * R), R=R)
    assert np.max(np.abs(sol.values - special.iv(1, k * sol.r))) < 1e-6
    assert sol.boundary_derivative == pytest.approx(k * special.ivp(1, k * R), rel=1e-5)


def test_mode_bvp_errors():
    with pytest.raises(ResolutionError):
        solve_mode_bvp(0, 1.0, np.zeros(9), DIRICHLET, 0.0, R=1.0)
    with pytest.raises(SingularOperatorError):
        solve_mode_bvp(0, 0.0, np.zeros(33), NEUMANN, 0.0, R=1.0)
    with pytest.raises(ValueError):
        solve_mode_bvp(0, 1.0, np.zeros(33), "robin", 0.0, R=1.0)
    with pytest.raises(ValueError):
        solve_mode_bvp(0, 1.0, np.zeros(33), DIRICHLET, 0.0)


def test_disk_solver_matches_mode_solver():
    grid = PolarGrid(1.2, 32, 16)
    rng = np.random.default_rng(1)
    src = rng.normal(size=(grid.n_modes, 33)).T
    bc = rng.normal(size=grid.n_modes)
    disk = DiskModeSolver(grid, 0.7, DIRICHLET)
    out = disk.solve_modes(src, bc)
    for k in range(grid.n_modes):
        ref = solve_mode_bvp(k, 0.7, src[:, k], DIRICHLET, bc[k], R=1.2).values
        assert np.allclose(out[:, k], ref, atol=1e-11)


@given(st.lists(st.floats(-0.03, 0.03), min_size=3, max_size=5))
def test_mapped_area_is_exact(coeffs):
    shape = BoundaryShape(1.0, coeffs)
    # the map folds beyond about R / 11.5
    assume(np.max(np.abs(shape.rho(np.linspace(0, 2 * np.pi, 256)))) < 1.0 / 12)
    mapped = MappedDisk(shape, PolarGrid(1.0, 32, 32))
    assert mapped.integrate(np.ones((33, 32))) == pytest.approx(area(shape), rel=2e-3)


def _manufactured(shape, n_r, zeta=2.0):
    grid = PolarGrid(shape.R, n_r, 2 * n_r)
    mapped = MappedDisk(shape, grid)
    x, y = mapped.positions()
    u = np.exp(0.3 * x) * np.cos(0.2 * y)
    f = (0.09 - 0.04 - zeta) * u
    solver = MappedPotentialSolver(grid, zeta, tol=1e-10)
    return np.max(np.abs(solver.solve(mapped, f, u[-1]) - u))


def test_mapped_solver_manufactured_convergence():
    shape = BoundaryShape(1.0, [0.01, 0.0, 0.06, -0.015])
    e1, e2 = _manufactured(shape, 32), _manufactured(shape, 64)
    assert e2 < 1e-4
    assert math.log2(e1 / e2) > 1.8


def test_circle_laplacian_of_quadratic():
    grid = PolarGrid(1.0, 32, 16)
    mapped = MappedDisk(BoundaryShape(1.0), grid)
    u = np.repeat(grid.r[:, None] ** 2, 16, axis=1)
    lap = mapped.laplacian(u, du_boundary=2.0)
    assert np.allclose(lap[1:-1], 4.0, atol=1e-10)


def test_drop_nyquist():
    v = np.cos(np.pi * np.arange(8)) + np.cos(2 * np.pi * np.arange(8) / 8)
    out = drop_nyquist(v[None, :])[0]
    assert np.allclose(out, np.cos(2 * np.pi * np.arange(8) / 8))
    assert np.allclose(drop_nyquist(out[None, :])[0], out)


def test_potential_of_resting_disk_is_constant():
    R = 1.4
    p = ModelParams.with_density(1.1, R, 2.1, 0.75, k_e=0.2)
    grid = PolarGrid(R, 32, 32)
    phi = solve_phi_on_disk(PolarField(grid, np.full((33, 32), 1.1)), BoundaryShape(R), p)
    assert np.allclose(phi.values, -0.75 / (2.1 * R), atol=1e-12)


def test_linearized_potential_matches_finite_difference():
    R, m0, eps = 1.4, 1.1, 1e-5
    p = ModelParams.with_density(m0, R, 2.1, 0.75, k_e=0.2)
    grid = PolarGrid(R, 48, 32)
    r, t = grid.r[:, None], grid.phi[None, :]
    dm = (1 - (r / R) ** 2) * np.cos(2 * t) + 0.3 * r**2
    rho = BoundaryShape(R, [0.02, 0.0, 0.05])
    base = solve_phi_on_disk(PolarField(grid, np.full((49, 32), m0)), BoundaryShape(R), p, tol=1e-13)
    pert = solve_phi_on_disk(PolarField(grid, m0 + eps * dm), BoundaryShape(R, eps * rho.rho_cos), p, tol=1e-13)
    lin = s_phi(PolarField(grid, dm), rho, p)
    inner = grid.r < R / 2
    fd = (pert.values - base.values) / eps
    assert np.max(np.abs(fd[inner] - lin.values[inner])) < 1e-4
