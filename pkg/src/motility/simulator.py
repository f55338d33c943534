"""Nonlinear time stepping of the free-boundary model on the boundary-fitted disk.

The state is the boundary shape (cosine coefficients plus the center
abscissa) and the myosin density sampled on the reference polar grid.  One
step solves for the potential on the current domain, moves the boundary
with normal speed d_nu phi, and advances the myosin by a conservative
arbitrary Lagrangian-Eulerian finite-volume update: advection by grad phi
relative to the moving mesh is explicit, diffusion is implicit.  The cell
masses W m telescope, so the discrete total mass is conserved up to the
linear-solver tolerance.

Symmetric (even in phi) data stay symmetric because every angular operation
is a cosine-mode operation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .elliptic import (
    DIRICHLET,
    NEUMANN,
    ConvergenceError,
    DiskModeSolver,
    MappedDisk,
    MappedPotentialSolver,
    assemble_divergence,
    drop_nyquist,
    potential_data,
)
from .geometry import (
    BoundaryShape,
    DegenerateDomainError,
    ModelParams,
    PolarField,
    PolarGrid,
    angular_derivative,
    area,
    boundary_map,
    cosine_coefficients,
    from_cosine_coefficients,
    map_derivatives,
)

log = logging.getLogger(__name__)

__all__ = [
    "SimulationError",
    "CFLError",
    "PositivityError",
    "InsufficientDecayError",
    "SimState",
    "Trajectory",
    "SimConfig",
    "init_state",
    "step",
    "stable_dt",
    "run",
    "decay_rate",
    "mass_matched_radius",
    "perturbed_state",
    "eigenvector_state",
    "tw_seed_state",
]


class SimulationError(RuntimeError):
    pass


class CFLError(SimulationError):
    pass


class PositivityError(SimulationError):
    pass


class InsufficientDecayError(ValueError):
    pass


@dataclass
class SimState:
    time: float
    shape: BoundaryShape
    myosin: PolarField
    params: ModelParams
    potential: PolarField | None = None

    @property
    def grid(self) -> PolarGrid:
        return self.myosin.grid

    def mapped(self) -> MappedDisk:
        return MappedDisk(self.shape, self.grid)

    def mass(self, mapped: MappedDisk | None = None) -> float:
        mapped = mapped if mapped is not None else self.mapped()
        return mapped.integrate(self.myosin.values)

    def area(self) -> float:
        return area(self.shape)


# ---------------------------------------------------------------- solvers


@lru_cache(maxsize=16)
def _potential_solver(grid: PolarGrid, zeta: float, tol: float) -> MappedPotentialSolver:
    return MappedPotentialSolver(grid, zeta, tol=tol, max_iter=400)


@lru_cache(maxsize=16)
def _diffusion_solver(grid: PolarGrid, dt: float) -> DiskModeSolver:
    return DiskModeSolver(grid, 1.0 / dt, NEUMANN)


@lru_cache(maxsize=16)
def _circle(grid: PolarGrid) -> MappedDisk:
    return MappedDisk(BoundaryShape(grid.R, [0.0]), grid)


def _implicit_diffusion(mapped: MappedDisk, b: np.ndarray, dt: float, tol: float, max_iter: int = 200):
    """Solve W m - dt * net(m) = W b with d_nu m = 0 by defect correction against the disk.

    The defect is scaled by the undeformed cell areas, which do not depend
    on the angle, so filtering the Nyquist mode keeps sum(W m) = sum(W b).
    """
    grid = mapped.grid
    disk = _diffusion_solver(grid, dt)
    circle = _circle(grid)
    zero = np.zeros(grid.n_phi)
    scale = max(1.0, float(np.max(np.abs(b))))
    ratio = mapped.W / circle.W

    def source(v):
        extra = (mapped.net_flux(v, du_boundary=0.0) - circle.net_flux(v, du_boundary=0.0)) / circle.W
        return drop_nyquist(-ratio * b / dt + (ratio - 1.0) * v / dt - extra)

    m = disk.solve(-b / dt, zero)
    for _ in range(max_iter):
        m_new = disk.solve(source(m), zero)
        err = float(np.max(np.abs(m_new - m)))
        m = m_new
        if err < tol * scale:
            return m
    raise ConvergenceError("implicit diffusion did not converge", err)


def _normal_derivative(mapped: MappedDisk, phi: np.ndarray, f: np.ndarray, zeta: float) -> np.ndarray:
    """d_nu phi on the boundary from the half-cell balance of the discrete Laplacian."""
    Fr, Fp = _flux_parts(mapped, phi)
    net = assemble_divergence(Fr, Fp, np.zeros(mapped.grid.n_phi), mapped.grid.h)
    lap_b = zeta * phi[-1] + drop_nyquist(f)[-1]
    return (mapped.W[-1] * lap_b - net[-1]) / mapped.J[-1]


def _flux_parts(mapped: MappedDisk, u: np.ndarray):
    h = mapped.grid.h
    u_phi = angular_derivative(u)
    Fr = mapped.a_rr_h * (u[1:] - u[:-1]) / h + mapped.a_rp_h * 0.5 * (u_phi[1:] + u_phi[:-1])
    u_r = np.zeros_like(u)
    u_r[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    Fp = mapped.a_rp * u_r + mapped.a_pp * u_phi
    return Fr, Fp


def _mesh_fluxes(shape_old: BoundaryShape, shape_new: BoundaryShape, grid: PolarGrid, dt: float, xc_rate: float):
    """Contravariant mesh-velocity fluxes (radial at half nodes, angular at nodes)."""
    phi = grid.phi[None, :]
    out = []
    for r in (grid.r_half[:, None], grid.r[:, None]):
        x0, y0 = boundary_map(shape_old, 1.0, r, phi)
        x1, y1 = boundary_map(shape_new, 1.0, r, phi)
        wx = (x1 - x0) / dt + xc_rate
        wy = (y1 - y0) / dt
        xr, xp, yr, yp = map_derivatives(shape_old, 1.0, r, phi)
        out.append((wx * yp - wy * xp, wy * xr - wx * yr))
    Ur = out[0][0]
    Up = out[1][1]
    return Ur, Up


def _filter_rho(coeffs: np.ndarray, n_phi: int) -> np.ndarray:
    """2/3-rule truncation of the boundary cosine series; also drops the Nyquist mode."""
    c = np.array(coeffs, dtype=float)
    k_max = int((2 * (n_phi // 2)) // 3)
    c[k_max + 1:] = 0.0
    return c


def _shape_samples(shape: BoundaryShape, grid: PolarGrid):
    t = grid.phi
    P = shape.radius(t)
    dP = shape.rho(t, 1)
    return t, P, dP, np.hypot(P, dP)


# ---------------------------------------------------------------- state construction


def init_state(shape: BoundaryShape, m_field: PolarField, params: ModelParams, smooth: bool = False) -> SimState:
    """Initial state: recentered shape and a positive myosin field on the reference grid.

    With ``smooth`` one implicit diffusion step of length h^2 is applied to
    bring d_nu m close to zero; this changes the field but not its mass.
    """
    from .geometry import recenter

    shape.check()
    if abs(shape.R - m_field.grid.R) > 1e-14 * shape.R:
        raise ValueError("shape base radius and grid radius differ")
    if np.min(m_field.values) <= 0:
        raise PositivityError("initial myosin must be positive")
    c = np.array(shape.rho_cos, dtype=float)
    if c.size > 1 and c[1] != 0.0:
        shape = recenter(shape)
    K = m_field.grid.n_modes
    coeffs = np.zeros(K)
    coeffs[: min(K, shape.n_modes)] = shape.rho_cos[:K]
    shape = BoundaryShape(shape.R, _filter_rho(coeffs, m_field.grid.n_phi), shape.Xc)
    shape.check()
    values = drop_nyquist(np.array(m_field.values, dtype=float))
    values[0] = np.mean(values[0])
    mapped = MappedDisk(shape, m_field.grid)
    if smooth:
        dt = m_field.grid.h ** 2
        values = _implicit_diffusion(mapped, values, dt, 1e-13)
        log.info("initial myosin smoothed by one diffusion step of length %.3g", dt)
    return SimState(0.0, shape, PolarField(m_field.grid, values), params)


def mass_matched_radius(mass: float, params: ModelParams, R_guess: float) -> float:
    """Radius of the resting disk carrying total myosin ``mass`` (nearest to R_guess)."""
    from scipy.optimize import brentq

    def g(R):
        return params.density(R) * math.pi * R * R - mass

    for width in (0.05, 0.2, 0.5):
        lo, hi = R_guess * (1 - width), R_guess * (1 + width)
        if g(lo) * g(hi) < 0:
            return float(brentq(g, lo, hi, xtol=1e-15, rtol=1e-15))
    return float(R_guess)


def perturbed_state(R: float, params: ModelParams, n_r: int, n_phi: int, amplitude: float,
                    modes=(0, 1, 2, 3), seed: int = 0) -> SimState:
    """Resting disk plus a smooth random perturbation of size ``amplitude``.

    The myosin perturbation has zero mean over the disk and the boundary is
    perturbed in modes >= 2 only, so the total mass changes at second order.
    """
    rng = np.random.default_rng(seed)
    grid = PolarGrid(R, n_r, n_phi)
    m0 = params.density(R)
    r = grid.r[:, None] / R
    t = grid.phi[None, :]
    dm = np.zeros((n_r + 1, n_phi))
    for k in modes:
        prof = (rng.normal() + rng.normal() * r * r) * r**k
        dm += prof * np.cos(k * t)
    dm -= grid.integrate(dm) / (math.pi * R * R)
    dm *= amplitude * m0 / max(1e-300, float(np.max(np.abs(dm))))
    coeffs = np.zeros(grid.n_modes)
    for k in modes:
        if k >= 2 and k < grid.n_modes - 1:
            coeffs[k] = amplitude * R * rng.normal()
    return init_state(BoundaryShape(R, coeffs), PolarField(grid, m0 + dm), params)


def eigenvector_state(R: float, params: ModelParams, n: int, m_profile: np.ndarray, rho_amp: float,
                      n_phi: int, amplitude: float) -> SimState:
    """Resting disk plus ``amplitude`` times an angular-mode-n eigenvector (m_profile(r), rho_amp)."""
    m_profile = np.asarray(m_profile, dtype=float)
    n_r = m_profile.size - 1
    grid = PolarGrid(R, n_r, n_phi)
    m0 = params.density(R)
    scale = max(float(np.max(np.abs(m_profile))) / m0, abs(rho_amp) / R)
    a = amplitude / scale
    values = m0 + a * m_profile[:, None] * np.cos(n * grid.phi)[None, :]
    coeffs = np.zeros(grid.n_modes)
    coeffs[n] = a * rho_amp
    return init_state(BoundaryShape(R, coeffs), PolarField(grid, values), params)


def tw_seed_state(tw, V: float, n_r: int, n_phi: int) -> SimState:
    """Expanded traveling wave at velocity V, myosin normalized to the wave's mass."""
    from .stability import _tw_myosin

    shape = tw.shape(V)
    grid = PolarGrid(tw.R0, n_r, n_phi)
    mapped = MappedDisk(shape, grid)
    x, y = mapped.positions()
    m = _tw_myosin(tw, V, np.hypot(x, y), np.arctan2(y, x))
    return init_state(shape, PolarField(grid, m), tw.params)


# ---------------------------------------------------------------- stepping


def _potential(state: SimState, mapped: MappedDisk, tol: float):
    grid = state.grid
    f, g = potential_data(state.shape, grid, state.myosin.values, state.params)
    solver = _potential_solver(grid, state.params.zeta, tol)
    u0 = None if state.potential is None else state.potential.values
    phi = solver.solve(mapped, f, g, u0=u0)
    return phi, f


def stable_dt(state: SimState, mapped: MappedDisk | None = None, tol: float = 1e-12) -> float:
    """Largest admissible explicit step: advective, boundary-motion and stiff-boundary bounds."""
    mapped = mapped if mapped is not None else state.mapped()
    phi, f = _potential(state, mapped, tol)
    grid = state.grid
    p = state.params
    dn = _normal_derivative(mapped, phi, f, p.zeta)
    h = grid.h
    grad = np.max(np.abs(np.diff(phi, axis=0))) / h
    bounds = [np.inf]
    if grad > 0:
        bounds.append(0.5 * h / grad)
    vmax = float(np.max(np.abs(dn)))
    if vmax > 0:
        bounds.append(0.1 * grid.R / vmax)
    # curvature-driven relaxation of the highest retained boundary mode
    k = (2 * (grid.n_phi // 2)) // 3
    R = grid.R
    rate = p.gamma * (k * k - 1) / (p.zeta * R * R) * math.sqrt(k * k / (R * R) + p.zeta)
    if rate > 0:
        bounds.append(1.8 / rate)
    return float(min(bounds))


def step(state: SimState, dt: float, tol: float = 1e-12, check_cfl: bool = True) -> SimState:
    """Advance the state by one IMEX Euler step of length dt."""
    grid = state.grid
    p = state.params
    mapped = state.mapped()
    phi, f = _potential(state, mapped, tol)
    if check_cfl:
        bound = _stiff_bound(grid, p)
        if dt > bound:
            raise CFLError(f"dt={dt:.3g} exceeds the boundary stability bound {bound:.3g}")
    m = state.myosin.values
    # boundary motion: V_nu = d_nu phi; the center absorbs the cos(phi) mode
    dn = _normal_derivative(mapped, phi, f, p.zeta)
    t, P, dP, S = _shape_samples(state.shape, grid)
    radial = (S / P) * dn
    transl = np.cos(t) + dP * np.sin(t) / P
    c_rad = cosine_coefficients(radial[None, :])[0]
    c_tr = cosine_coefficients(transl[None, :])[0]
    xc_rate = float(c_rad[1] / c_tr[1])
    rho_rate = cosine_coefficients((radial - xc_rate * transl)[None, :])[0]
    rho_rate[1] = 0.0
    coeffs = np.zeros(grid.n_modes)
    coeffs[: min(grid.n_modes, state.shape.n_modes)] = state.shape.rho_cos[: grid.n_modes]
    coeffs = _filter_rho(coeffs + dt * rho_rate, grid.n_phi)
    new_shape = BoundaryShape(state.shape.R, coeffs, state.shape.Xc + dt * xc_rate)
    try:
        new_mapped = MappedDisk(new_shape, grid)
    except DegenerateDomainError as exc:
        raise SimulationError(f"simulator: boundary update degenerated the domain at t={state.time:.6g}") from exc
    # myosin: explicit advection relative to the mesh, conservative in W m
    FrP, FpP = _flux_parts(mapped, phi)
    Ur, Up = _mesh_fluxes(state.shape, new_shape, grid, dt, xc_rate)
    m_h = 0.5 * (m[1:] + m[:-1])
    Fr = -m_h * (FrP - Ur)
    Fp = -m * (FpP - Up)
    net = assemble_divergence(Fr, Fp, np.zeros(grid.n_phi), grid.h)
    net[0] = np.mean(net[0])
    q = mapped.W * m + dt * net
    b = drop_nyquist(q / new_mapped.W)
    b[0] = np.mean(b[0])
    m_new = _implicit_diffusion(new_mapped, b, dt, tol)
    m_new[0] = np.mean(m_new[0])
    if not np.all(np.isfinite(m_new)):
        raise SimulationError("simulator: non-finite myosin")
    if np.min(m_new) < 0:
        raise PositivityError(f"simulator: myosin became negative ({np.min(m_new):.3g}) at t={state.time + dt:.6g}")
    return SimState(state.time + dt, new_shape, PolarField(grid, m_new), p, PolarField(grid, phi))


def _stiff_bound(grid: PolarGrid, p: ModelParams) -> float:
    k = (2 * (grid.n_phi // 2)) // 3
    R = grid.R
    rate = p.gamma * (k * k - 1) / (p.zeta * R * R) * math.sqrt(k * k / (R * R) + p.zeta)
    return 1.8 / rate if rate > 0 else np.inf


# ---------------------------------------------------------------- trajectories


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    area: list = field(default_factory=list)
    Xc: list = field(default_factory=list)
    rho_dev: list = field(default_factory=list)
    m_dev: list = field(default_factory=list)
    states: list = field(default_factory=list)
    event: str = "t_end"
    message: str = ""

    def deviation(self) -> np.ndarray:
        return np.asarray(self.rho_dev) + np.asarray(self.m_dev)

    def record(self, state: SimState, reference) -> None:
        if self.times and state.time <= self.times[-1]:
            raise ValueError("trajectory times must increase")
        mapped = state.mapped()
        self.times.append(state.time)
        self.mass.append(state.mass(mapped))
        self.area.append(state.area())
        self.Xc.append(state.shape.Xc)
        rd, md = reference(state, mapped)
        self.rho_dev.append(rd)
        self.m_dev.append(md)

    def to_csv(self) -> str:
        lines = ["t,mass,area,Xc,rho_dev,m_dev"]
        for row in zip(self.times, self.mass, self.area, self.Xc, self.rho_dev, self.m_dev):
            lines.append(",".join(f"{v:.12g}" for v in row))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "event": self.event, "message": self.message, "n_samples": len(self.times),
            "t": list(map(float, self.times)), "mass": list(map(float, self.mass)),
            "area": list(map(float, self.area)), "Xc": list(map(float, self.Xc)),
            "rho_dev": list(map(float, self.rho_dev)), "m_dev": list(map(float, self.m_dev)),
        }


def steady_reference(params: ModelParams, mass: float, R_guess: float):
    """Deviation from the resting disk with the same total mass, in the co-moving frame."""
    R_inf = mass_matched_radius(mass, params, R_guess)
    m_inf = params.density(R_inf)

    def reference(state: SimState, mapped: MappedDisk):
        c = np.array(state.shape.rho_cos, dtype=float)
        c[0] -= R_inf - state.shape.R
        rd = float(np.sqrt(np.sum(c * c)))
        md = math.sqrt(abs(mapped.integrate((state.myosin.values - m_inf) ** 2)) / area(state.shape))
        return rd, md

    return reference


def seed_reference(seed: SimState):
    """Deviation from a fixed seed state, compared in the co-moving frame."""
    c0 = np.array(seed.shape.rho_cos, dtype=float)
    m_seed = seed.myosin.values

    def reference(state: SimState, mapped: MappedDisk):
        c = np.zeros(max(c0.size, state.shape.n_modes))
        c[: state.shape.n_modes] += state.shape.rho_cos
        c[: c0.size] -= c0
        rd = float(np.sqrt(np.sum(c * c)))
        md = math.sqrt(abs(mapped.integrate((state.myosin.values - m_seed) ** 2)) / area(state.shape))
        return rd, md

    return reference


@dataclass
class SimConfig:
    """Run configuration; keys mirror the flat ``section.key`` config file names."""

    zeta: float = 2.1
    gamma: float = 0.75
    p_h: float | None = None
    k_e: float | None = None
    m0: float = 1.1
    R: float = 1.0
    n_r: int = 32
    n_phi: int = 64
    dt: float = 1e-3
    t_end: float = 1.0
    sample_every: int = 10
    kind: str = "perturbed"
    amplitude: float = 1e-3
    mode: int = -1
    V: float = 0.05
    seed: int = 0
    tol_converge: float = 1e-10
    blowup_tol: float = 0.5
    solver_tol: float = 1e-12

    _SECTIONS = {
        "params": ("zeta", "gamma", "p_h", "k_e", "m0"),
        "grid": ("n_r", "n_phi"),
        "time": ("dt", "t_end", "sample_every"),
        "init": ("kind", "amplitude", "mode", "R", "V", "seed"),
        "events": ("tol_converge", "blowup_tol"),
        "solver": ("solver_tol",),
    }

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        """Accept nested sections or flat ``section.key`` names."""
        flat = {}
        for key, value in data.items():
            if isinstance(value, dict):
                for k2, v2 in value.items():
                    flat[f"{key}.{k2}"] = v2
            else:
                flat[key] = value
        kwargs = {}
        known = {f"{s}.{k}": k for s, keys in cls._SECTIONS.items() for k in keys}
        for key, value in flat.items():
            name = known.get(key, key if key in cls.__dataclass_fields__ else None)
            if name is None or name.startswith("_"):
                raise KeyError(f"unknown simulator config key: {key}")
            kwargs[name] = value
        cfg = cls(**kwargs)
        if cfg.kind not in ("steady", "perturbed", "tw_seed"):
            raise ValueError(f"init.kind must be steady, perturbed or tw_seed, not {cfg.kind!r}")
        return cfg

    def model_params(self) -> ModelParams:
        from .stability import compliant_params

        if self.p_h is not None:
            return ModelParams(self.zeta, self.gamma, self.p_h, self.k_e or 0.0)
        if self.k_e is not None:
            return ModelParams.with_density(self.m0, self.R, self.zeta, self.gamma, self.k_e)
        return compliant_params(self.m0, self.R, self.zeta, self.gamma)


def _initial(cfg: SimConfig, params: ModelParams):
    if cfg.kind == "steady":
        grid = PolarGrid(cfg.R, cfg.n_r, cfg.n_phi)
        m0 = params.density(cfg.R)
        state = init_state(BoundaryShape(cfg.R, [0.0]), PolarField(grid, np.full((cfg.n_r + 1, cfg.n_phi), m0)), params)
        return state, None
    if cfg.kind == "perturbed":
        modes = (0, 1, 2, 3) if cfg.mode < 0 else (cfg.mode,)
        return perturbed_state(cfg.R, params, cfg.n_r, cfg.n_phi, cfg.amplitude, modes, cfg.seed), None
    from .bifurcation import tw_expand

    tw = tw_expand(cfg.R, params)
    state = tw_seed_state(tw, cfg.V, cfg.n_r, cfg.n_phi)
    return state, state


def run(config, state: SimState | None = None, reference=None) -> Trajectory:
    """Integrate until t_end or an event (convergence, blowup, positivity loss).

    ``config`` is a :class:`SimConfig` or a dict accepted by
    :meth:`SimConfig.from_dict`.  Step errors stop the run; the partial
    trajectory is returned with ``event`` set to the error class name.
    """
    cfg = config if isinstance(config, SimConfig) else SimConfig.from_dict(config)
    seed = None
    if state is None:
        params = cfg.model_params()
        state, seed = _initial(cfg, params)
    if reference is None:
        if seed is not None:
            reference = seed_reference(seed)
        else:
            reference = steady_reference(state.params, state.mass(), state.shape.R)
    traj = Trajectory()
    traj.record(state, reference)
    n_steps = int(round(cfg.t_end / cfg.dt))
    for i in range(1, n_steps + 1):
        try:
            state = step(state, cfg.dt, tol=cfg.solver_tol)
        except (SimulationError, ConvergenceError) as exc:
            traj.event, traj.message = type(exc).__name__, str(exc)
            log.warning("run stopped: %s", exc)
            break
        if i % cfg.sample_every == 0 or i == n_steps:
            traj.record(state, reference)
            dev = traj.rho_dev[-1] + traj.m_dev[-1]
            if dev < cfg.tol_converge:
                traj.event = "converged"
                break
            if traj.rho_dev[-1] > cfg.blowup_tol * state.shape.R:
                traj.event = "blowup"
                break
    traj.states.append(state)
    return traj


def decay_rate(trajectory: Trajectory, decades: float = 1.0, min_efolds: float = 3.0) -> float:
    """Least-squares slope of log(deviation) over the final ``decades`` of decay.

    Raises InsufficientDecayError when the deviation has not dropped by
    ``min_efolds`` e-foldings over the trajectory.
    """
    t = np.asarray(trajectory.times, dtype=float)
    d = trajectory.deviation()
    if t.size < 3 or not np.all(d > 0):
        raise InsufficientDecayError("need at least three positive deviation samples")
    logd = np.log(d)
    if logd[0] - logd[-1] < min_efolds:
        raise InsufficientDecayError(f"deviation decayed by {logd[0] - logd[-1]:.2f} e-folds, need {min_efolds}")
    start = np.nonzero(logd <= logd[-1] + decades * math.log(10.0))[0][0]
    start = min(start, t.size - 3)
    slope = np.polyfit(t[start:], logd[start:], 1)[0]
    return float(slope)
