"""Screened-Poisson solvers on the disk.

Radial discretization: uniform vertex grid r_i = i h, i = 0..n_r, written in
finite-volume form so that the discrete flux telescopes exactly.  The origin
node carries the cell [0, h/2]; for angular modes n >= 1 it is pinned to
zero (regularity).  The last node carries the half cell [R - h/2, R].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .geometry import (
    BoundaryShape,
    ModelParams,
    PolarField,
    PolarGrid,
    angular_derivative,
    area,
    cosine_coefficients,
    curvature,
    from_cosine_coefficients,
    map_derivatives,
    map_jacobian,
)

__all__ = [
    "SingularOperatorError",
    "ResolutionError",
    "ConvergenceError",
    "RadialProfile",
    "radial_operator_bands",
    "solve_mode_bvp",
    "DiskModeSolver",
    "MappedDisk",
    "solve_phi_on_disk",
    "s_phi",
]

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


class SingularOperatorError(ArithmeticError):
    pass


class ResolutionError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass
class RadialProfile:
    """Samples of a mode profile on r_i = i R / n_r."""

    R: float
    values: np.ndarray
    boundary_value: float = float("nan")
    boundary_derivative: float = float("nan")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def n_r(self) -> int:
        return self.values.size - 1

    @property
    def r(self) -> np.ndarray:
        return np.linspace(0.0, self.R, self.values.size)

    @classmethod
    def from_function(cls, R: float, n_r: int, func) -> "RadialProfile":
        r = np.linspace(0.0, R, n_r + 1)
        return cls(R, np.asarray(func(r), dtype=float) * np.ones_like(r))


def _check_bc(bc_kind: str) -> str:
    kind = bc_kind.lower()
    if kind not in (DIRICHLET, NEUMANN):
        raise ValueError(f"unknown boundary condition {bc_kind!r}")
    return kind


def radial_weights(R: float, n_r: int) -> np.ndarray:
    return PolarGrid(R, n_r, 4).radial_weights()


def radial_operator_bands(n: int, zeta_eff: float, R: float, n_r: int, bc_kind: str):
    """Banded form (3, n_r + 1) of the weighted operator W * (L_n - zeta_eff).

    Row i of the full system reads ``sum_j A_ij u_j = W_i f_i`` except on
    pinned rows (origin for n >= 1, boundary for Dirichlet), which read u_i = value.
    """
    kind = _check_bc(bc_kind)
    h = R / n_r
    r = np.linspace(0.0, R, n_r + 1)
    rh = (np.arange(n_r) + 0.5) * h
    w = radial_weights(R, n_r)
    lower = np.zeros(n_r + 1)
    diag = np.zeros(n_r + 1)
    upper = np.zeros(n_r + 1)
    coef = rh / h  # face conductances r_{i+1/2} / h
    # interior and boundary rows: flux in minus flux out
    diag[1:] -= coef
    lower[1:] = coef  # multiplies u_{i-1}
    diag[:-1] -= coef
    upper[:-1] = coef  # multiplies u_{i+1}
    with np.errstate(divide="ignore"):
        centrifugal = np.where(r > 0, n * n / np.where(r > 0, r, 1.0) ** 2, 0.0)
    diag -= w * (centrifugal + zeta_eff)
    if n >= 1:
        diag[0], upper[0] = 1.0, 0.0
        lower[1] = 0.0
    if kind == DIRICHLET:
        diag[-1], lower[-1] = 1.0, 0.0
    bands = np.zeros((3, n_r + 1))
    bands[0, 1:] = upper[:-1]
    bands[1] = diag
    bands[2, :-1] = lower[1:]
    return bands


def _rhs(n: int, source: np.ndarray, w: np.ndarray, R: float, kind: str, bc_value) -> np.ndarray:
    rhs = w[:, None] * source if source.ndim == 2 else w * source
    rhs = np.array(rhs, dtype=float)
    if n >= 1:
        rhs[0] = 0.0
    if kind == DIRICHLET:
        rhs[-1] = bc_value
    else:
        rhs[-1] -= R * np.asarray(bc_value)
    return rhs


def boundary_flux_derivative(n, zeta_eff, R, u, source, kind, bc_value) -> float:
    """u'(R) from the half-cell balance (second order, flux-consistent)."""
    if kind == NEUMANN:
        return float(bc_value)
    n_r = u.size - 1
    h = R / n_r
    w_last = 0.5 * h * (R - 0.25 * h)
    inner = (R - 0.5 * h) * (u[-1] - u[-2]) / h
    return float((inner + w_last * (source[-1] + (n * n / R**2 + zeta_eff) * u[-1])) / R)


def solve_mode_bvp(n: int, zeta_eff: float, source, bc_kind: str, bc_value: float, R: float | None = None) -> RadialProfile:
    """Solve (1/r)(r u')' - n^2 u / r^2 - zeta_eff u = source on (0, R).

    Parameters
    ----------
    n : int
        Angular mode number; fixes regularity at the origin.
    zeta_eff : float
        Screening coefficient.
    source : RadialProfile or array_like
        Right-hand side sampled on the radial grid.
    bc_kind : {"dirichlet", "neumann"}
        Type of condition at r = R.
    bc_value : float
        u(R) or u'(R).
    R : float, optional
        Required when ``source`` is a bare array.

    Returns
    -------
    RadialProfile
        With ``boundary_value`` and ``boundary_derivative`` filled in.
    """
    kind = _check_bc(bc_kind)
    if isinstance(source, RadialProfile):
        R = source.R
        f = source.values
    else:
        if R is None:
            raise ValueError("R is required with an array source")
        f = np.asarray(source, dtype=float)
    n_r = f.size - 1
    if n_r < 16:
        raise ResolutionError("need at least 16 radial intervals")
    if n < 0:
        raise ValueError("mode number must be non-negative")
    if kind == NEUMANN and n == 0 and not zeta_eff > 0:
        raise SingularOperatorError("Neumann problem for mode 0 needs zeta_eff > 0")
    bands = radial_operator_bands(n, zeta_eff, R, n_r, kind)
    w = radial_weights(R, n_r)
    rhs = _rhs(n, f, w, R, kind, bc_value)
    try:
        u = solve_banded((1, 1), bands, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularOperatorError(str(exc)) from exc
    if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > 1e14 * (1 + np.max(np.abs(rhs))):
        raise SingularOperatorError("mode operator is numerically singular")
    bv = float(u[-1])
    bd = boundary_flux_derivative(n, zeta_eff, R, u, f, kind, bc_value)
    return RadialProfile(R, u, bv, bd)


class DiskModeSolver:
    """All cosine modes of the disk operator at once, factorized up front.

    Solves (1/r)(r u_k')' - k^2 u_k/r^2 - zeta_eff u_k = f_k for k = 0..n_phi/2.
    """

    def __init__(self, grid: PolarGrid, zeta_eff: float, bc_kind: str):
        self.grid = grid
        self.zeta_eff = float(zeta_eff)
        self.kind = _check_bc(bc_kind)
        self.weights = grid.radial_weights()
        n_r = grid.n_r
        self.inverses = np.empty((grid.n_modes, n_r + 1, n_r + 1))
        for k in range(grid.n_modes):
            if self.kind == NEUMANN and k == 0 and not self.zeta_eff > 0:
                raise SingularOperatorError("Neumann problem for mode 0 needs zeta_eff > 0")
            bands = radial_operator_bands(k, self.zeta_eff, grid.R, n_r, self.kind)
            dense = np.diag(bands[1]) + np.diag(bands[0, 1:], 1) + np.diag(bands[2, :-1], -1)
            self.inverses[k] = np.linalg.inv(dense)

    def solve_modes(self, source_modes: np.ndarray, bc_modes: np.ndarray) -> np.ndarray:
        """source_modes: (n_r + 1, K); bc_modes: (K,) -> solution modes (n_r + 1, K)."""
        rhs = self.weights[:, None] * source_modes
        rhs[0, 1:] = 0.0
        if self.kind == DIRICHLET:
            rhs[-1] = bc_modes
        else:
            rhs[-1] = rhs[-1] - self.grid.R * bc_modes
        return np.einsum("kij,jk->ik", self.inverses, rhs)

    def solve(self, source: np.ndarray, bc_values: np.ndarray) -> np.ndarray:
        """Grid-space wrapper: source (n_r + 1, n_phi), bc_values (n_phi,)."""
        n_phi = self.grid.n_phi
        modes = cosine_coefficients(source)
        bc = cosine_coefficients(np.asarray(bc_values, dtype=float)[None, :])[0]
        out = self.solve_modes(modes, bc)
        if n_phi % 2 == 0:
            out[:, -1] = 0.0
        return from_cosine_coefficients(out, n_phi)


class MappedDisk:
    """Metric coefficients of the boundary-fitted map on a polar grid.

    The mapped Laplacian is (1/W) times the net flux of J g^{ab} d_b u out of
    each control cell, with W the mapped cell area per unit angle.
    """

    def __init__(self, shape: BoundaryShape, grid: PolarGrid, eps: float = 1.0):
        if abs(shape.R - grid.R) > 1e-14 * grid.R:
            raise ValueError("grid radius and shape base radius differ")
        shape.check()
        self.shape = shape
        self.grid = grid
        self.eps = eps
        r = grid.r[:, None]
        rh = grid.r_half[:, None]
        phi = grid.phi[None, :]
        h = grid.h
        xr, xp, yr, yp = map_derivatives(shape, eps, r, phi)
        J = xr * yp - xp * yr
        self.J = J
        self.x, self.y = None, None
        with np.errstate(divide="ignore", invalid="ignore"):
            self.a_rp = np.where(r > 0, -(xr * xp + yr * yp) / J, 0.0)
            self.a_pp = np.where(r > 0, (xr * xr + yr * yr) / J, 0.0)
        xr, xp, yr, yp = map_derivatives(shape, eps, rh, phi)
        Jh = xr * yp - xp * yr
        if np.min(Jh) <= 0 or np.min(J[1:]) <= 0:
            from .geometry import DegenerateDomainError

            raise DegenerateDomainError("boundary-fitted map folds over (J <= 0)")
        self.a_rr_h = (xp * xp + yp * yp) / Jh
        self.a_rp_h = -(xr * xp + yr * yp) / Jh
        W = h * J
        W[0] = h * h / 8.0
        W[-1] = 0.5 * h * map_jacobian(shape, eps, grid.R - 0.25 * h, grid.phi)
        self.W = W

    def positions(self):
        from .geometry import boundary_map

        return boundary_map(self.shape, self.eps, self.grid.r[:, None], self.grid.phi[None, :])

    def net_flux(self, u: np.ndarray, du_boundary=None, extra_flux=None) -> np.ndarray:
        """Net outward flux of J g^{ab} d_b u per control cell and unit angle.

        ``du_boundary`` is d_r u at r = R (Neumann data); if None a one-sided
        second-order difference is used.  ``extra_flux`` optionally adds
        convective fluxes (Fr at half nodes, Fphi at nodes).
        """
        h = self.grid.h
        u_phi = angular_derivative(u)
        Fr = self.a_rr_h * (u[1:] - u[:-1]) / h + self.a_rp_h * 0.5 * (u_phi[1:] + u_phi[:-1])
        u_r = np.empty_like(u)
        u_r[1:-1] = (u[2:] - u[:-2]) / (2 * h)
        u_r[0] = 0.0
        if du_boundary is None:
            u_r[-1] = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
        else:
            u_r[-1] = du_boundary
        Fp = self.a_rp * u_r + self.a_pp * u_phi
        Fb = self.J[-1] * u_r[-1]
        if extra_flux is not None:
            Fr = Fr + extra_flux[0]
            Fp = Fp + extra_flux[1]
            Fb = Fb + extra_flux[2]
        return assemble_divergence(Fr, Fp, Fb, h)

    def laplacian(self, u: np.ndarray, du_boundary=None) -> np.ndarray:
        return self.net_flux(u, du_boundary) / self.W

    def integrate(self, values: np.ndarray) -> float:
        """Integral over the physical domain of a field given on the reference grid."""
        return float(2 * np.pi * np.mean(self.W * values, axis=1).sum())


def assemble_divergence(Fr: np.ndarray, Fp: np.ndarray, Fb: np.ndarray, h: float) -> np.ndarray:
    """Cell balances from face fluxes Fr (n_r, n_phi), nodal angular fluxes Fp
    (n_r + 1, n_phi) and boundary flux Fb (n_phi,)."""
    net = np.zeros_like(Fp)
    dFp = angular_derivative(Fp)
    net[1:-1] = Fr[1:] - Fr[:-1] + h * dFp[1:-1]
    net[-1] = Fb - Fr[-1] + 0.5 * h * dFp[-1]
    net[0] = np.mean(Fr[0])
    return net


class MappedPotentialSolver:
    """Solver for Delta u - zeta u = f on a mapped disk with Dirichlet data.

    Writes the mapped operator as L0 + D with L0 the undeformed disk
    operator (solved exactly mode by mode) and D the map-induced correction,
    which vanishes identically for r < R/2.  Iterates u <- L0^{-1}(f - D u);
    the mapped-equation residual of the new iterate equals D(u_old - u_new).
    When the observed contraction factor exceeds ``switch_rate`` the same
    fixed-point equation is handed to GMRES.  The angular Nyquist mode is
    filtered throughout.
    """

    def __init__(self, grid: PolarGrid, zeta: float, tol: float = 1e-10, max_iter: int = 200,
                 switch_rate: float = 0.3):
        self.grid = grid
        self.zeta = zeta
        self.tol = tol
        self.max_iter = max_iter
        self.switch_rate = switch_rate
        self.disk = DiskModeSolver(grid, zeta, DIRICHLET)
        self.circle = MappedDisk(BoundaryShape(grid.R, [0.0]), grid)
        self.last_iterations = 0
        self.last_residual = 0.0
        self.used_krylov = False

    def correction(self, mapped: MappedDisk, v: np.ndarray) -> np.ndarray:
        d = drop_nyquist(mapped.laplacian(v) - self.circle.laplacian(v))
        d[-1] = 0.0
        d[0] = 0.0
        return d

    def solve(self, mapped: MappedDisk, f: np.ndarray, g: np.ndarray, u0=None) -> np.ndarray:
        g = drop_nyquist(np.asarray(g, dtype=float)[None, :])[0]
        f = drop_nyquist(np.asarray(f, dtype=float))
        u = self.disk.solve(f, g) if u0 is None else drop_nyquist(np.array(u0, dtype=float))
        self.used_krylov = False
        self.scale = max(1.0, float(np.max(np.abs(f))))
        previous = np.inf
        for it in range(1, self.max_iter + 1):
            u_new = self.disk.solve(f - self.correction(mapped, u), g)
            err = float(np.max(np.abs(self.correction(mapped, u - u_new))))
            u = u_new
            self.last_iterations, self.last_residual = it, err
            if err < self.tol * self.scale:
                return u
            if it >= 2 and err > self.switch_rate * previous:
                return self._krylov(mapped, u, f, g)
            previous = err
        raise ConvergenceError("defect correction did not converge", self.last_residual)

    def _krylov(self, mapped: MappedDisk, u: np.ndarray, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        from scipy.sparse.linalg import LinearOperator, gmres

        self.used_krylov = True
        shape = u.shape
        zero_bc = np.zeros(self.grid.n_phi)
        size = u.size
        b = self.disk.solve(f, g).ravel()

        def apply(v):
            v = v.reshape(shape)
            return (v + self.disk.solve(self.correction(mapped, v), zero_bc)).ravel()

        A = LinearOperator((size, size), matvec=apply)
        x = u.ravel()
        for restart in range(max(1, self.max_iter // 40)):
            x, _info = gmres(A, b, x0=x, rtol=1e-15, atol=0.0, restart=40, maxiter=1)
            u = x.reshape(shape)
            u_new = self.disk.solve(f - self.correction(mapped, u), g)
            err = float(np.max(np.abs(self.correction(mapped, u - u_new))))
            u = u_new
            x = u.ravel()
            self.last_iterations += 40
            self.last_residual = err
            if err < self.tol * self.scale:
                return u
        raise ConvergenceError("preconditioned GMRES did not converge", self.last_residual)


def drop_nyquist(values: np.ndarray) -> np.ndarray:
    """Remove the angular Nyquist mode (it has no spectral first derivative)."""
    n = values.shape[-1]
    if n % 2:
        return np.array(values, dtype=float)
    sign = (-1.0) ** np.arange(n)
    amp = np.mean(values * sign, axis=-1, keepdims=True)
    return values - amp * sign


def potential_data(shape: BoundaryShape, grid: PolarGrid, m: np.ndarray, params: ModelParams):
    """Source f = p_eff(|Omega|) - m and Dirichlet data -gamma kappa / zeta."""
    f = params.p_eff(area(shape)) - m
    g = -params.gamma * curvature(shape, grid.phi) / params.zeta
    return f, g


def solve_phi_on_disk(m: PolarField, shape: BoundaryShape, params: ModelParams, eps: float = 1.0,
                      tol: float = 1e-10, max_iter: int = 200) -> PolarField:
    """Potential on the mapped reference disk for myosin ``m`` and boundary ``shape``.

    Solves Delta phi + m = zeta phi + p_eff(|Omega|) in the physical domain,
    zeta phi = -gamma kappa on its boundary, by defect correction.
    """
    grid = m.grid
    mapped = MappedDisk(shape, grid, eps)
    f, g = potential_data(shape, grid, m.values, params)
    solver = MappedPotentialSolver(grid, params.zeta, tol, max_iter)
    return PolarField(grid, solver.solve(mapped, f, g))


def s_phi(m: PolarField, rho: BoundaryShape, params: ModelParams) -> PolarField:
    """Linearized potential on B_R for a myosin perturbation and boundary perturbation.

    Solves Delta S + m = zeta S + p_eff'(pi R^2) R int rho dphi in B_R with
    S = gamma/(R^2 zeta) (rho'' + rho) on the boundary, mode by mode.
    """
    grid = m.grid
    R = rho.R
    if abs(R - grid.R) > 1e-14 * R:
        raise ValueError("grid radius and shape base radius differ")
    modes = cosine_coefficients(m.values)
    K = grid.n_modes
    rho_hat = np.zeros(K)
    n_keep = min(K, rho.n_modes)
    rho_hat[:n_keep] = rho.rho_cos[:n_keep]
    k = np.arange(K)
    bc = params.gamma / (R * R * params.zeta) * (1 - k * k) * rho_hat
    source = -modes
    source[:, 0] += params.dp_eff * R * 2 * np.pi * rho_hat[0]
    out = np.zeros_like(modes)
    for kk in range(K):
        out[:, kk] = solve_mode_bvp(kk, params.zeta, source[:, kk], DIRICHLET, bc[kk], R=R).values
    return PolarField(grid, from_cosine_coefficients(out, grid.n_phi))
