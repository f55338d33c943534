"""Onset of motion: the bifurcation function, its root, and small-velocity
traveling waves.

The traveling-wave expansion is carried to second order in the velocity V.
Radial profiles of the second-order potential are computed by Chebyshev
collocation on an interval that extends past the resting radius, so the
expanded potential can be evaluated on the deformed domain.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C

from .elliptic import NEUMANN, RadialProfile, solve_mode_bvp
from .geometry import BoundaryShape, ModelParams, PolarField, PolarGrid, area, boundary_map, curvature
from .specfun import bessel_i, bessel_i_prime

__all__ = [
    "TransversalityWarning",
    "NoSignChangeError",
    "SingularClosureError",
    "lambda_of_r",
    "f_of_r",
    "scan_sign_changes",
    "BifurcationRoot",
    "find_bifurcation_radius",
    "psi_profile",
    "TravelingWave",
    "tw_expand",
    "TWFields",
    "tw_fields",
    "tw_residual",
    "domain_quadrature",
    "MassVelocityCurve",
    "mass_vs_velocity",
]


class TransversalityWarning(RuntimeWarning):
    pass


class NoSignChangeError(ValueError):
    pass


class SingularClosureError(ArithmeticError):
    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


def lambda_of_r(R: float, params: ModelParams) -> float:
    """Average density p_eff(pi R^2) - gamma/R attached to the radius R."""
    return params.density(R)


def _kappa(R: float, params: ModelParams) -> tuple[float, float]:
    lam = lambda_of_r(R, params)
    if not params.zeta > lam:
        raise ValueError(f"requires zeta > Lambda(R); Lambda({R:.6g}) = {lam:.6g}")
    return lam, math.sqrt(params.zeta - lam)


def f_of_r(R: float, params: ModelParams, printed: bool = False) -> float:
    """F(R) = zeta I1(R k) / (k^3 I1'(R k)) - R Lambda / k^2 with k = sqrt(zeta - Lambda(R)).

    With ``printed=True`` the derivative is evaluated at k instead of R k.
    """
    lam, k = _kappa(R, params)
    arg = k if printed else R * k
    return params.zeta * bessel_i(1, R * k) / (k**3 * bessel_i_prime(1, arg)) - R * lam / k**2


def scan_sign_changes(func, R_min: float, R_max: float, n: int = 400) -> list:
    """Brackets (a, b) on a uniform grid where ``func`` changes sign; points
    where ``func`` is undefined are skipped."""
    grid = np.linspace(R_min, R_max, n + 1)
    vals = []
    for R in grid:
        try:
            vals.append(func(R))
        except ValueError:
            vals.append(np.nan)
    out = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if np.isfinite(fa) and np.isfinite(fb) and fa * fb < 0:
            out.append((float(a), float(b)))
    return out


def _illinois(f, a: float, b: float, tol: float = 1e-13, max_iter: int = 200) -> float:
    """Bracketed false position with the Illinois modification, falling back to bisection."""
    fa, fb = f(a), f(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    if fa * fb > 0:
        raise NoSignChangeError(f"no sign change on [{a:.6g}, {b:.6g}]")
    side = 0
    for it in range(max_iter):
        if b - a < tol * max(1.0, abs(a)):
            break
        c = (a * fb - b * fa) / (fb - fa)
        if not a < c < b or it % 8 == 7:
            c = 0.5 * (a + b)
        fc = f(c)
        if fc == 0:
            return c
        if fc * fb < 0:
            a, fa = b, fb
            b, fb = c, fc
            side = 0
        else:
            b, fb = c, fc
            if side == 1:
                fa *= 0.5
            side = 1
        if a > b:
            a, b, fa, fb = b, a, fb, fa
    return 0.5 * (a + b)


@dataclass
class BifurcationRoot:
    R0: float
    slope: float
    m0: float
    transversal: bool
    printed: bool = False

    def to_dict(self) -> dict:
        return {"R0": self.R0, "dF_dR": self.slope, "m0": self.m0, "transversal": self.transversal,
                "printed_argument": self.printed}


def find_bifurcation_radius(params: ModelParams, bracket, printed: bool = False,
                            tol: float = 1e-13) -> BifurcationRoot:
    """Root of F on ``bracket`` and the central-difference slope F'(R0)."""
    lo, hi = map(float, bracket)

    def f(R):
        return f_of_r(R, params, printed)

    R0 = _illinois(f, lo, hi, tol=tol)
    step = 1e-6 * R0
    slope = (f(R0 + step) - f(R0 - step)) / (2 * step)
    scale = max(abs(f(lo)), abs(f(hi)), 1e-300) / (hi - lo)
    transversal = abs(slope) >= 1e-6 * scale
    if not transversal:
        warnings.warn(f"F'(R0) = {slope:.3e} is degenerate", TransversalityWarning, stacklevel=2)
    return BifurcationRoot(R0, float(slope), lambda_of_r(R0, params), transversal, printed)


def psi_profile(r, R: float, params: ModelParams, printed: bool = False, deriv: int = 0):
    """psi(r, R) on the unit radius variable r in [0, 1].

    psi = -R Lambda r / k^2 + zeta I1(R k r) / (k^3 I1'(R k)); psi(1, R) = F(R)
    and psi'(1, R) = R.
    """
    lam, k = _kappa(R, params)
    r = np.asarray(r, dtype=float)
    denom = k**3 * bessel_i_prime(1, k if printed else R * k)
    if deriv == 0:
        return -R * lam * r / k**2 + params.zeta * bessel_i(1, R * k * r) / denom
    if deriv == 1:
        return -R * lam / k**2 + params.zeta * R * k * bessel_i_prime(1, R * k * r) / denom
    raise ValueError("deriv must be 0 or 1")


# ---------------------------------------------------------------- Chebyshev radial solves


def _cheb_basis(x: np.ndarray, n: int, L: float):
    """Values, first and second r-derivatives of T_0..T_n on r = L (t + 1) / 2."""
    t = 2.0 * np.asarray(x, dtype=float) / L - 1.0
    eye = np.eye(n + 1)
    V0 = np.stack([C.chebval(t, eye[k]) for k in range(n + 1)], axis=-1)
    V1 = np.stack([C.chebval(t, C.chebder(eye[k], 1)) for k in range(n + 1)], axis=-1) * (2.0 / L)
    V2 = np.stack([C.chebval(t, C.chebder(eye[k], 2)) for k in range(n + 1)], axis=-1) * (2.0 / L) ** 2
    return V0, V1, V2


@dataclass(frozen=True)
class ChebProfile:
    """Radial profile stored as a Chebyshev series on [0, L]."""

    coeffs: np.ndarray
    L: float

    def __call__(self, r, deriv: int = 0):
        t = 2.0 * np.asarray(r, dtype=float) / self.L - 1.0
        c = C.chebder(self.coeffs, deriv) * (2.0 / self.L) ** deriv if deriv else self.coeffs
        return C.chebval(t, c)

    def radial_integral(self, R: float) -> float:
        """int_0^R u(r) r dr."""
        # u(r) r as a series in t: r = L (t + 1) / 2
        rc = np.array([self.L / 2, self.L / 2])
        prod = C.chebmul(self.coeffs, rc)
        anti = C.chebint(prod) * (self.L / 2)
        return float(C.chebval(2 * R / self.L - 1, anti) - C.chebval(-1.0, anti))


def cheb_mode_solve(n: int, kappa2: float, source, R0: float, L: float, order: int = 56) -> ChebProfile:
    """Solve u'' + u'/r - (n^2/r^2 + kappa2) u = source(r) with origin
    regularity and u'(R0) = 0, on [0, L] with L >= R0."""
    k = np.arange(1, order)
    t = np.cos(np.pi * k / order)[::-1]
    r = L * (t + 1) / 2
    V0, V1, V2 = _cheb_basis(r, order, L)
    A = r[:, None] ** 2 * V2 + r[:, None] * V1 - (n * n + kappa2 * r[:, None] ** 2) * V0
    b = r**2 * source(r)
    z0, z1, _ = _cheb_basis(np.array([0.0]), order, L)
    reg = z1 if n == 0 else z0
    _, n1, _ = _cheb_basis(np.array([R0]), order, L)
    A = np.vstack([reg, A, n1])
    b = np.concatenate([[0.0], b, [0.0]])
    coeffs = np.linalg.solve(A, b)
    return ChebProfile(coeffs, L)


# ---------------------------------------------------------------- traveling waves


def phi1_eval(r, R: float, m0: float, zeta: float, deriv: int = 0):
    """Closed-form first-order profile and its r-derivatives (deriv <= 2), valid for any r >= 0."""
    k = math.sqrt(zeta - m0)
    c = m0 / k**2
    r = np.asarray(r, dtype=float)
    scale = R / bessel_i(1, k * R)
    if deriv == 0:
        return c * (scale * bessel_i(1, k * r) - r)
    if deriv == 1:
        return c * (scale * k * bessel_i_prime(1, k * r) - 1.0)
    if deriv == 2:
        z = k * r
        zs = np.where(z > 0, z, 1.0)
        i1pp = np.where(z > 0, ((zs**2 + 1) * bessel_i(1, zs) - zs * bessel_i_prime(1, zs)) / zs**2, 0.0)
        return c * scale * k * k * i1pp
    raise ValueError("deriv must be 0, 1 or 2")


@dataclass
class TravelingWave:
    """Second-order small-velocity expansion about the critical disk.

    Potential: phi0 + V phi1(r) cos(t) + V^2 (phi2_0(r) + phi2_2(r) cos 2t).
    Boundary: r = R0 + V^2 (rho2_mode0 + rho2_mode2 cos 2t).
    Myosin: (m0 + V^2 density2) exp(Phi - phi0 - V x), where
    density2 = exp(phi0) * lambda2_tilde.
    """

    R0: float
    params: ModelParams
    m0: float
    phi0: float
    phi1: RadialProfile
    phi2_mode0: RadialProfile
    phi2_mode2: RadialProfile
    rho2_mode0: float
    rho2_mode2: float
    lambda2_tilde: float
    valid_V: float
    density2: float
    closure_condition: float
    _cheb0: ChebProfile = field(repr=False, default=None)
    _cheb2: ChebProfile = field(repr=False, default=None)

    @property
    def kappa(self) -> float:
        return math.sqrt(self.params.zeta - self.m0)

    def phi1_eval(self, r, deriv: int = 0):
        return phi1_eval(r, self.R0, self.m0, self.params.zeta, deriv)

    def phi2_eval(self, mode: int, r, deriv: int = 0):
        prof = {0: self._cheb0, 2: self._cheb2}[mode]
        return prof(r, deriv)

    def shape(self, V: float) -> BoundaryShape:
        return BoundaryShape(self.R0, np.array([V * V * self.rho2_mode0, 0.0, V * V * self.rho2_mode2]))

    def potential(self, r, t, V: float, deriv: str = ""):
        """Phi and its derivatives: deriv in {"", "r", "t", "rr", "tt", "rt"}."""
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        dr = deriv.count("r")
        dt = deriv.count("t")
        ang1 = [np.cos(t), -np.sin(t), -np.cos(t)][dt]
        ang2 = [np.cos(2 * t), -2 * np.sin(2 * t), -4 * np.cos(2 * t)][dt]
        out = V * self.phi1_eval(r, dr) * ang1 + V * V * self.phi2_eval(2, r, dr) * ang2
        if dt == 0:
            out = out + V * V * self.phi2_eval(0, r, dr)
            if dr == 0:
                out = out + self.phi0
        return out

    def laplacian(self, r, t, V: float):
        return self.potential(r, t, V, "rr") + self.potential(r, t, V, "r") / r + self.potential(r, t, V, "tt") / r**2

    def to_dict(self) -> dict:
        return {
            "R0": self.R0, "m0": self.m0, "phi0": self.phi0, "rho2_mode0": self.rho2_mode0,
            "rho2_mode2": self.rho2_mode2, "lambda2_tilde": self.lambda2_tilde, "density2": self.density2,
            "valid_V": self.valid_V, "closure_condition": self.closure_condition,
            "phi1_prime_R0": self.phi1.boundary_derivative,
        }


def tw_expand(R0: float, params: ModelParams, n_r: int = 512, order: int = 56, extend: float = 1.6) -> TravelingWave:
    """Expansion coefficients at the critical radius R0.

    Mode 2 of the second-order boundary data fixes rho2_mode2 through the
    curvature condition. Mode 0 couples the density correction and
    rho2_mode0; it is closed by the curvature condition and by keeping the
    average density equal to Lambda(R0) to second order.
    """
    zeta, gamma = params.zeta, params.gamma
    m0 = lambda_of_r(R0, params)
    if not zeta > m0 > 0:
        raise ValueError("requires zeta > m0 > 0 at R0")
    k2 = zeta - m0
    dp = params.dp_eff
    phi0 = -gamma / (zeta * R0)
    L = extend * R0

    def phi1(r, deriv=0):
        return phi1_eval(r, R0, m0, zeta, deriv)

    def half_source(r):
        return -0.25 * m0 * (phi1(r) - r) ** 2

    cheb2 = cheb_mode_solve(2, k2, half_source, R0, L, order)
    cheb_s = cheb_mode_solve(0, k2, half_source, R0, L, order)
    rho2 = -zeta * R0**2 * float(cheb2(R0)) / (3 * gamma)

    # phi2_0 = u_s + (D - 2 pi p' R0 rho0) / k2 with D the density correction
    c_area = 2 * math.pi * dp * R0
    r_q, w_q = np.polynomial.legendre.leggauss(64)
    rq = 0.5 * R0 * (r_q + 1)
    wq = 0.5 * R0 * w_q
    sq_int = float(np.sum(wq * rq * (phi1(rq) - rq) ** 2))  # int (phi1 - r)^2 r dr
    us_int = cheb_s.radial_integral(R0)
    disk = math.pi * R0**2
    # rows: curvature condition at mode 0, average density to second order
    A = np.array([
        [zeta / k2, -zeta * c_area / k2 - gamma / R0**2],
        [disk + m0 * disk / k2, -m0 * disk * c_area / k2],
    ])
    b = -np.array([zeta * float(cheb_s(R0)), m0 * (2 * math.pi * us_int + 0.5 * math.pi * sq_int)])
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularClosureError("mode-0 closure is singular", cond)
    D, rho0 = np.linalg.solve(A, b)
    shift = (D - c_area * rho0) / k2
    cheb0 = ChebProfile(C.chebadd(cheb_s.coeffs, [shift]), L)

    r = np.linspace(0.0, R0, n_r + 1)
    phi1_vals = phi1(r)
    phi1_vals[-1] = 0.0
    phi1_prof = RadialProfile(R0, phi1_vals, 0.0, float(phi1(R0, 1)))
    p0 = RadialProfile(R0, cheb0(r), float(cheb0(R0)), float(cheb0(R0, 1)))
    p2 = RadialProfile(R0, cheb2(r), float(cheb2(R0)), float(cheb2(R0, 1)))
    rho_max = abs(rho0) + abs(rho2)
    valid = math.sqrt(R0 / (12.0 * rho_max)) if rho_max > 0 else float("inf")
    return TravelingWave(R0, params, m0, phi0, phi1_prof, p0, p2, float(rho0), float(rho2),
                         float(D * math.exp(-phi0)), valid, float(D), cond, cheb0, cheb2)


# ---------------------------------------------------------------- quadrature on the deformed disk


def domain_quadrature(shape: BoundaryShape, n_s: int = 64, n_t: int = 128):
    """Nodes (r, t) and weights for int over {r < R(t)} f r dr dt: Gauss-Legendre in
    the scaled radius s = r / R(t), trapezoid in t."""
    shape.check()
    s, ws = np.polynomial.legendre.leggauss(n_s)
    s = 0.5 * (s + 1)
    ws = 0.5 * ws
    t = 2 * np.pi * np.arange(n_t) / n_t
    Rt = shape.radius(t)
    r = s[:, None] * Rt[None, :]
    w = ws[:, None] * (2 * np.pi / n_t) * Rt[None, :] ** 2 * s[:, None]
    return r, np.broadcast_to(t, r.shape), w


def _exponent(tw: TravelingWave, r, t, V):
    return tw.potential(r, t, V) - tw.phi0 - V * r * np.cos(t)


@dataclass
class TWFields:
    shape: BoundaryShape
    myosin: PolarField
    potential: PolarField
    x: np.ndarray
    y: np.ndarray
    V: float
    coords: str

    def boundary_myosin(self) -> np.ndarray:
        return self.myosin.values[-1]


def tw_fields(tw: TravelingWave, V: float, n_r: int = 64, n_phi: int = 128, coords: str = "auto") -> TWFields:
    """Shape, myosin and potential of the expanded wave at velocity V.

    Myosin is Lambda exp(Phi - V x) normalized by its mean over the domain,
    so its integral equals Lambda(R0) |Omega|. Grid nodes are placed either
    by the boundary-fitted map (``coords="map"``) or by radial scaling
    r = s R(t) (``coords="scaled"``); "auto" uses the map when it is valid.
    """
    if abs(V) > tw.valid_V:
        warnings.warn(f"|V| = {abs(V):.3g} exceeds the recommended {tw.valid_V:.3g}", RuntimeWarning, stacklevel=2)
    shape = tw.shape(V)
    grid = PolarGrid(tw.R0, n_r, n_phi)
    rr, tt = np.meshgrid(grid.r, grid.phi, indexing="ij")
    if coords == "auto":
        coords = "map" if np.max(np.abs(shape.rho(grid.phi))) < tw.R0 / 11.5 else "scaled"
    if coords == "map":
        x, y = boundary_map(shape, 1.0, rr, tt)
        rp = np.hypot(x, y)
        tp = np.arctan2(y, x)
    elif coords == "scaled":
        rp = rr / tw.R0 * shape.radius(tt)
        tp = tt
        x, y = rp * np.cos(tp), rp * np.sin(tp)
    else:
        raise ValueError("coords must be 'map', 'scaled' or 'auto'")
    qr, qt, qw = domain_quadrature(shape)
    mean = float(np.sum(qw * np.exp(_exponent(tw, qr, qt, V)))) / area(shape)
    m = tw.m0 * np.exp(_exponent(tw, rp, tp, V)) / mean
    phi = tw.potential(rp, tp, V)
    return TWFields(shape, PolarField(grid, m), PolarField(grid, phi), x, y, V, coords)


def tw_residual(tw: TravelingWave, V: float, n_s: int = 48, n_t: int = 96) -> dict:
    """Max-norm residuals of the traveling-wave problem for the expanded solution:
    the bulk equation with normalized myosin, the no-flux condition
    d_nu(Phi - V x) = 0 and the curvature condition zeta Phi + gamma kappa = 0."""
    p = tw.params
    shape = tw.shape(V)
    qr, qt, qw = domain_quadrature(shape)
    omega = area(shape)
    expo = np.exp(_exponent(tw, qr, qt, V))
    mean = float(np.sum(qw * expo)) / omega
    r, t, _ = domain_quadrature(shape, n_s, n_t)
    m = tw.m0 * np.exp(_exponent(tw, r, t, V)) / mean
    bulk = tw.laplacian(r, t, V) + m - p.zeta * tw.potential(r, t, V) - p.p_eff(omega)

    tb = 2 * np.pi * np.arange(n_t) / n_t
    Rb = shape.radius(tb)
    dR = shape.rho(tb, 1)
    # outward normal direction proportional to (Rb, -dR) in the (e_r, e_t) frame
    gr = tw.potential(Rb, tb, V, "r") - V * np.cos(tb)
    gt = (tw.potential(Rb, tb, V, "t") + V * Rb * np.sin(tb)) / Rb
    flux = (Rb * gr - dR * gt) / np.hypot(Rb, dR)
    curv = p.zeta * tw.potential(Rb, tb, V) + p.gamma * curvature(shape, tb)
    res = {"bulk": float(np.max(np.abs(bulk))), "flux": float(np.max(np.abs(flux))),
           "curvature": float(np.max(np.abs(curv)))}
    res["total"] = max(res.values())
    return res


@dataclass
class MassVelocityCurve:
    """Total myosin along the expanded branch.

    ``masses`` integrates the normalized myosin Lambda exp(Phi - V x) / <exp(Phi - V x)>,
    which equals Lambda(R0) |Omega(V)|. ``masses_truncated`` uses the
    second-order density (m0 + V^2 density2) exp(Phi - phi0 - V x) instead;
    the two agree to O(V^2) and are kept side by side as a diagnostic.
    """

    velocities: np.ndarray
    masses: np.ndarray
    critical_mass: float
    areas: np.ndarray
    masses_truncated: np.ndarray

    def slopes(self) -> np.ndarray:
        return np.gradient(self.masses, self.velocities)

    def turning_velocity(self) -> float | None:
        """Smallest V > 0 where dM/dV changes sign from negative to positive, by
        linear interpolation; None if absent."""
        pos = self.velocities > 0
        v = self.velocities[pos]
        s = self.slopes()[pos]
        for i in range(len(v) - 1):
            if s[i] < 0 <= s[i + 1]:
                return float(v[i] - s[i] * (v[i + 1] - v[i]) / (s[i + 1] - s[i]))
        return None

    def to_csv(self) -> str:
        lines = ["V,M,M_truncated"]
        lines += [f"{v:.10g},{m:.12e},{mt:.12e}" for v, m, mt in zip(self.velocities, self.masses, self.masses_truncated)]
        return "\n".join(lines) + "\n"


def mass_vs_velocity(tw: TravelingWave, V_grid, n_s: int = 64, n_t: int = 128, jobs: int = 1) -> MassVelocityCurve:
    """Total myosin M(V) on the expanded branch by tensor quadrature on the deformed disk."""
    V_grid = np.asarray(V_grid, dtype=float)

    def one(V):
        shape = tw.shape(V)
        r, t, w = domain_quadrature(shape, n_s, n_t)
        e = np.exp(_exponent(tw, r, t, V))
        omega = float(np.sum(w))
        normalized = tw.m0 * e / (float(np.sum(w * e)) / omega)
        truncated = (tw.m0 + V * V * tw.density2) * e
        return float(np.sum(w * normalized)), float(np.sum(w * truncated)), area(shape)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as ex:
            out = list(ex.map(one, V_grid))
    else:
        out = [one(V) for V in V_grid]
    out = np.array(out)
    return MassVelocityCurve(V_grid, out[:, 0], tw.m0 * math.pi * tw.R0**2, out[:, 2], out[:, 1])
