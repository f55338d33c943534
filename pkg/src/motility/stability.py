"""Linear stability of resting disks.

Radial steady states, the mode-1 bifurcation profile, classification with
hypothesis checks, per-mode discretizations of the linearized operator and
their spectra, the area-constrained minimization constant Q, and a
randomized check of the Neumann-Poincare type inequality used for modes
n >= 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elliptic import (
    DIRICHLET,
    NEUMANN,
    RadialProfile,
    radial_operator_bands,
    radial_weights,
    solve_mode_bvp,
)
from .geometry import ModelParams
from .specfun import bessel_i, bessel_i_prime, besselj_prime_zero

__all__ = [
    "NonphysicalError",
    "SteadyState",
    "radial_steady_state",
    "Phi1Result",
    "phi1_profile",
    "phi1_slope",
    "critical_radius_fixed_density",
    "HypothesisCheck",
    "area_stiffness_bound",
    "compliant_params",
    "Classification",
    "classify",
    "neumann_eigenvalue",
    "QResult",
    "q_functional",
    "ModeSystem",
    "assemble_operator_mode",
    "Spectrum",
    "mode_spectrum",
    "full_spectrum",
    "InequalityReport",
    "rayleigh_inequality_check",
    "TWOperator",
    "assemble_tw_operator",
    "tw_kernel_vectors",
    "tw_mass_eigenvector_check",
]


class NonphysicalError(ValueError):
    pass


@dataclass(frozen=True)
class SteadyState:
    R: float
    m0: float
    phi0: float
    params: ModelParams

    def residuals(self) -> dict:
        """Residuals of the bulk equation and the boundary condition at the constant pair."""
        p = self.params
        bulk = self.m0 - p.zeta * self.phi0 - p.p_eff(math.pi * self.R**2)
        boundary = p.zeta * self.phi0 + p.gamma / self.R
        return {"bulk": abs(bulk), "boundary": abs(boundary)}

    @property
    def mass(self) -> float:
        return self.m0 * math.pi * self.R**2


def radial_steady_state(R: float, params: ModelParams) -> SteadyState:
    """Disk of radius R with constant myosin m0 = p_eff(pi R^2) - gamma/R and
    potential phi0 = -gamma/(zeta R)."""
    if not R > 0:
        raise ValueError("R must be positive")
    m0 = params.density(R)
    if not m0 > 0:
        raise NonphysicalError(f"myosin density m0 = {m0:.6g} is not positive")
    return SteadyState(R=R, m0=m0, phi0=-params.gamma / (params.zeta * R), params=params)


# ---------------------------------------------------------------- mode 1 profile


def phi1_slope(R: float, m0: float, zeta: float) -> float:
    """phi_1'(R) from the closed form."""
    if not zeta > m0:
        raise ValueError("requires zeta > m0")
    kappa = math.sqrt(zeta - m0)
    x = kappa * R
    return m0 / (zeta - m0) * (x * bessel_i_prime(1, x) / bessel_i(1, x) - 1.0)


def phi1_closed_form(r, R: float, m0: float, zeta: float) -> np.ndarray:
    kappa = math.sqrt(zeta - m0)
    r = np.asarray(r, dtype=float)
    return m0 / (zeta - m0) * (R * bessel_i(1, kappa * r) / bessel_i(1, kappa * R) - r)


@dataclass
class Phi1Result:
    closed: RadialProfile
    bvp: RadialProfile
    derivative: float
    derivative_bvp: float
    max_gap: float


def phi1_profile(R: float, m0: float, zeta: float, n_r: int = 2048) -> Phi1Result:
    """Mode-1 profile with zero values at r = 0 and r = R, computed by the
    Bessel closed form and by the finite-volume mode solver."""
    if not zeta > m0:
        raise ValueError("requires zeta > m0")
    r = np.linspace(0.0, R, n_r + 1)
    closed_vals = phi1_closed_form(r, R, m0, zeta)
    closed_vals[0] = 0.0
    closed_vals[-1] = 0.0
    slope = phi1_slope(R, m0, zeta)
    closed = RadialProfile(R, closed_vals, 0.0, slope)
    bvp = solve_mode_bvp(1, zeta - m0, m0 * r, DIRICHLET, 0.0, R=R)
    gap = float(np.max(np.abs(bvp.values - closed_vals)))
    return Phi1Result(closed, bvp, slope, bvp.boundary_derivative, gap)


def _bisect(f, a: float, b: float, tol: float = 1e-13, max_iter: int = 300) -> float:
    fa, fb = f(a), f(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    if fa * fb > 0:
        raise ValueError("no sign change on the bracket")
    for _ in range(max_iter):
        c = 0.5 * (a + b)
        fc = f(c)
        if fc == 0 or b - a < tol * max(1.0, abs(c)):
            return c
        if fa * fc < 0:
            b, fb = c, fc
        else:
            a, fa = c, fc
    return 0.5 * (a + b)


def critical_radius_fixed_density(m0: float, zeta: float) -> float:
    """Radius R with phi_1'(R) = 1 at fixed m0: m0 x I1'(x)/I1(x) = zeta, x = R sqrt(zeta - m0)."""
    if not zeta > m0 > 0:
        raise ValueError("requires zeta > m0 > 0")
    kappa = math.sqrt(zeta - m0)

    def g(x):
        return m0 * x * bessel_i_prime(1, x) / bessel_i(1, x) - zeta

    hi = 1.0
    while g(hi) < 0:
        hi *= 2.0
    return _bisect(g, 1e-8, hi) / kappa


# ---------------------------------------------------------------- classification


def neumann_eigenvalue(R: float, order: int, index: int = 1) -> float:
    """Neumann Laplacian eigenvalue (j'_{order,index}/R)^2 on B_R (order >= 1 or index >= 2 for order 0)."""
    if order == 0:
        return (besselj_prime_zero(0, index - 1) / R) ** 2 if index > 1 else 0.0
    return (besselj_prime_zero(order, index) / R) ** 2


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class Classification:
    label: str
    phi1_prime: float
    m0: float
    R: float
    hypotheses: list = field(default_factory=list)

    @property
    def hypotheses_ok(self) -> bool:
        return all(h.passed for h in self.hypotheses)

    def failed(self) -> list:
        return [h.name for h in self.hypotheses if not h.passed]

    def to_dict(self) -> dict:
        return {
            "classification": self.label,
            "R": self.R,
            "m0": self.m0,
            "phi1_prime": self.phi1_prime,
            "hypotheses": [{"name": h.name, "passed": h.passed, "detail": h.detail} for h in self.hypotheses],
        }


def area_stiffness_bound(R: float, m0: float, zeta: float, gamma: float) -> float:
    """Upper bound on p_eff' required for the resting disk to be stable in mode 0."""
    return -(gamma / R + 2 * m0 + math.sqrt(2 * R * math.sqrt(zeta)) * m0) / (2 * math.pi * R * R)


def compliant_params(m0: float, R: float, zeta: float, gamma: float, margin: float = 1.5) -> ModelParams:
    """Parameters with density m0 at R and k_e = margin times the smallest admissible stiffness."""
    k_e = -margin * area_stiffness_bound(R, m0, zeta, gamma)
    return ModelParams.with_density(m0, R, zeta, gamma, k_e=k_e)


def hypothesis_report(R: float, params: ModelParams) -> list:
    m0 = params.density(R)
    zeta, gamma = params.zeta, params.gamma
    lam3 = neumann_eigenvalue(R, 2, 1)
    bound = area_stiffness_bound(R, m0, zeta, gamma)
    return [
        HypothesisCheck("zeta>m0", zeta > m0, f"zeta={zeta:.6g}, m0={m0:.6g}"),
        HypothesisCheck("m0<=lambda3", m0 <= lam3, f"m0={m0:.6g}, lambda3=(j'_21/R)^2={lam3:.6g}"),
        HypothesisCheck("area_stiffness", params.dp_eff <= bound,
                        f"p_eff'={params.dp_eff:.6g}, bound={bound:.6g}"),
    ]


def classify(R: float, params: ModelParams, tol: float = 1e-9) -> Classification:
    """Stable / Critical / Unstable from the sign of phi_1'(R) - 1, with the
    hypothesis report attached (failed hypotheses are reported, not raised)."""
    hyps = hypothesis_report(R, params)
    m0 = params.density(R)
    if not params.zeta > m0 or not m0 > 0:
        return Classification("Undetermined", float("nan"), m0, R, hyps)
    slope = phi1_slope(R, m0, params.zeta)
    if abs(slope - 1.0) <= tol:
        label = "Critical"
    elif slope < 1.0:
        label = "Stable"
    else:
        label = "Unstable"
    return Classification(label, slope, m0, R, hyps)


# ---------------------------------------------------------------- Q functional


@dataclass
class QResult:
    closed: float
    discrete: float
    rel_gap: float
    lower_bound: float


def q_closed_form(R: float, zeta: float) -> float:
    x = math.sqrt(zeta) * R
    return 2 * math.pi * zeta * R * R * bessel_i(1, x) / (x * bessel_i(2, x))


def q_discrete(R: float, zeta: float, n_r: int = 1024) -> float:
    """Minimum of int |grad w|^2 + zeta int w^2 over radial w with zero mean and
    w(R) = 1, by solving the discrete KKT system."""
    h = R / n_r
    rh = (np.arange(n_r) + 0.5) * h
    w = radial_weights(R, n_r)
    n = n_r + 1
    K = np.zeros((n, n))
    idx = np.arange(n_r)
    c = rh / h
    K[idx, idx] += c
    K[idx + 1, idx + 1] += c
    K[idx, idx + 1] -= c
    K[idx + 1, idx] -= c
    K += np.diag(zeta * w)
    K *= 2 * math.pi
    # unknowns: w_0..w_{n-2}, multiplier mu; w_{n-1} = 1
    A = np.zeros((n, n))
    A[: n - 1, : n - 1] = K[: n - 1, : n - 1]
    A[: n - 1, n - 1] = w[: n - 1]
    A[n - 1, : n - 1] = w[: n - 1]
    b = np.zeros(n)
    b[: n - 1] = -K[: n - 1, n - 1]
    b[n - 1] = -w[n - 1]
    sol = np.linalg.solve(A, b)
    ww = np.append(sol[: n - 1], 1.0)
    return float(ww @ K @ ww)


def q_functional(R: float, zeta: float, n_r: int = 1024, check: bool = True) -> QResult:
    if not zeta > 0:
        raise ValueError("zeta must be positive")
    closed = q_closed_form(R, zeta)
    discrete = q_discrete(R, zeta, n_r) if check else float("nan")
    gap = abs(discrete - closed) / closed if check else float("nan")
    return QResult(closed, discrete, gap, 2 * math.pi * math.sqrt(zeta) * R)


# ---------------------------------------------------------------- linearized operator


@dataclass
class ModeSystem:
    """Dense discretization of the linearized operator on one angular mode.

    Unknowns are the myosin mode values on the active radial nodes (all
    nodes for n = 0, nodes 1..n_r otherwise) followed by the boundary
    amplitude rho_n, which is omitted for n = 1 where it is frozen.
    """

    mode: int
    matrix: np.ndarray
    R: float
    params: ModelParams
    n_r: int
    m_nodes: np.ndarray
    has_rho: bool
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def split(self, vec: np.ndarray):
        k = self.m_nodes.size
        m = np.zeros(self.n_r + 1, dtype=vec.dtype)
        m[self.m_nodes] = vec[:k]
        rho = vec[k] if self.has_rho else 0.0
        return m, rho


def _dense_from_bands(bands: np.ndarray) -> np.ndarray:
    return np.diag(bands[1]) + np.diag(bands[0, 1:], 1) + np.diag(bands[2, :-1], -1)


def assemble_operator_mode(n: int, steady: SteadyState, n_r: int) -> ModeSystem:
    """Matrix of (m, rho) -> (Delta m - m0 Delta phi, (1 - delta_{n1}) phi_r(R)) on mode n.

    phi is eliminated through Delta phi - zeta phi = -m + delta_{n0} 2 pi p_eff' R rho
    with phi(R) = gamma (1 - n^2) rho / (R^2 zeta), and Delta phi in the myosin
    equation is replaced by zeta phi - m + delta_{n0} 2 pi p_eff' R rho.
    """
    if n < 0:
        raise ValueError("mode must be non-negative")
    R, m0, params = steady.R, steady.m0, steady.params
    zeta, gamma = params.zeta, params.gamma
    h = R / n_r
    w = radial_weights(R, n_r)
    N1 = n_r + 1
    c_area = 2 * math.pi * params.dp_eff * R if n == 0 else 0.0
    bc_rho = gamma * (1 - n * n) / (R * R * zeta)

    # Neumann Laplacian on mode n (rows divided by the cell weights)
    lap = _dense_from_bands(radial_operator_bands(n, 0.0, R, n_r, NEUMANN))
    lap = lap / w[:, None]
    # Dirichlet solve operator: u = G (W f) with pinned rows replaced by values
    dir_mat = _dense_from_bands(radial_operator_bands(n, zeta, R, n_r, DIRICHLET))
    G = np.linalg.inv(dir_mat)
    active = np.arange(N1) if n == 0 else np.arange(1, N1)
    has_rho = n != 1
    k = active.size
    size = k + (1 if has_rho else 0)

    # phi as a linear function of (m, rho): source f = -m + c_area rho
    Wdiag = w.copy()
    if n >= 1:
        Wdiag[0] = 0.0
    Wdiag[-1] = 0.0  # Dirichlet row carries the boundary value instead
    phi_m = -G * Wdiag[None, :]  # d phi / d m_j
    e_last = np.zeros(N1)
    e_last[-1] = 1.0
    w_src = Wdiag * c_area
    phi_rho = G @ (w_src + bc_rho * e_last)

    # f on nodes as function of (m, rho)
    f_m = -np.eye(N1)
    f_rho = np.full(N1, c_area)

    A = np.zeros((size, size))
    # myosin rows: lap m - m0 (zeta phi + f)
    Mm = lap - m0 * (zeta * phi_m + f_m)
    A[:k, :k] = Mm[np.ix_(active, active)]
    if has_rho:
        A[:k, k] = (-m0 * (zeta * phi_rho + f_rho))[active]
        # boundary row: phi_r(R) from the half-cell balance
        w_last = w[-1]
        coef = (R - 0.5 * h) / h
        d_m = (coef * (phi_m[-1] - phi_m[-2]) + w_last * (f_m[-1] + (n * n / R**2 + zeta) * phi_m[-1])) / R
        d_rho = (coef * (phi_rho[-1] - phi_rho[-2]) + w_last * (f_rho[-1] + (n * n / R**2 + zeta) * phi_rho[-1])) / R
        A[k, :k] = d_m[active]
        A[k, k] = d_rho
    return ModeSystem(n, A, R, params, n_r, active, has_rho, w)


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    modes: np.ndarray
    residuals: np.ndarray
    eigenvectors: list
    zero_multiplicity: int
    structural_zeros: int
    zero_tol: float
    spectral_radius: float
    scale: float
    extrapolated: dict = field(default_factory=dict)

    def max_real(self, mode: int | None = None, exclude_zero: bool = False) -> float:
        sel = np.ones(self.eigenvalues.size, bool) if mode is None else self.modes == mode
        vals = self.eigenvalues[sel]
        if exclude_zero:
            vals = vals[np.abs(vals) >= self.zero_tol]
        return float(np.max(vals.real)) if vals.size else float("-inf")

    def to_csv(self) -> str:
        lines = ["mode,re_lambda,im_lambda,residual"]
        for n, lam, res in zip(self.modes, self.eigenvalues, self.residuals):
            lines.append(f"{int(n)},{lam.real:.12e},{lam.imag:.12e},{res:.3e}")
        return "\n".join(lines) + "\n"


def mode_spectrum(system: ModeSystem):
    """Eigenpairs of one mode system sorted by descending real part, with relative residuals."""
    lam, vec = np.linalg.eig(system.matrix)
    order = np.lexsort((-lam.imag, -lam.real))
    lam, vec = lam[order], vec[:, order]
    norms = np.linalg.norm(vec, axis=0)
    res = np.linalg.norm(system.matrix @ vec - vec * lam[None, :], axis=0) / norms
    return lam, vec, res


def full_spectrum(steady: SteadyState, n_max: int = 8, n_r: int = 64, richardson: bool = True,
                  n_track: int = 4, jobs: int = 1) -> Spectrum:
    """Union of mode spectra n = 0..n_max.

    The rigid shift (0, cos phi) is counted as one structural zero. Other
    zero eigenvalues are counted with |lambda| < 1e-6 * scale after
    two-grid Richardson extrapolation of the n_track leading eigenvalues of
    each mode, where scale is the largest of those extrapolated magnitudes.
    """
    def run(n):
        sysA = assemble_operator_mode(n, steady, n_r)
        lam, vec, res = mode_spectrum(sysA)
        fine = None
        if richardson:
            fine_sys = assemble_operator_mode(n, steady, 2 * n_r)
            lam_f = np.linalg.eigvals(fine_sys.matrix)
            lam_f = lam_f[np.lexsort((-lam_f.imag, -lam_f.real))]
            fine = lam_f[:n_track]
        return n, lam, vec, res, fine

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as ex:
            results = list(ex.map(run, range(n_max + 1)))
    else:
        results = [run(n) for n in range(n_max + 1)]

    all_lam, all_modes, all_res, all_vec = [], [], [], []
    extrap = {}
    for n, lam, vec, res, fine in results:
        all_lam.append(lam)
        all_modes.append(np.full(lam.size, n))
        all_res.append(res)
        all_vec.extend(vec.T)
        if fine is not None:
            coarse = lam[:n_track]
            extrap[n] = (4 * fine[: coarse.size] - coarse) / 3.0
    lam = np.concatenate(all_lam)
    modes = np.concatenate(all_modes)
    res = np.concatenate(all_res)
    radius = float(np.max(np.abs(lam)))
    # the discrete spectral radius grows like h^-2, so the scale is taken
    # from the resolved (tracked) part of the spectrum
    tracked = [np.abs(v) for v in extrap.values()] if richardson else [np.abs(l[:n_track]) for _, l, *_ in results]
    scale = float(np.max(np.concatenate(tracked)))
    tol = 1e-6 * scale
    count = 1  # rigid shift, structural
    if richardson:
        for n, vals in extrap.items():
            count += int(np.sum(np.abs(vals) < tol))
    else:
        count += int(np.sum(np.abs(lam) < tol))
    order = np.lexsort((-lam.imag, -lam.real))
    return Spectrum(lam[order], modes[order], res[order], [all_vec[i] for i in order], count, 1, tol, radius, scale, extrap)


# ---------------------------------------------------------------- inequality check


@dataclass
class InequalityReport:
    trials: int
    violations: int
    worst_margin: float
    slack_constant: float
    m0: float
    eigenfunction_lhs: float


def _mode_forms(R: float, n_r: int, k: int):
    """Discrete Dirichlet-energy and mass matrices of one angular mode (per unit angle weight)."""
    h = R / n_r
    rh = (np.arange(n_r) + 0.5) * h
    w = radial_weights(R, n_r)
    r = np.linspace(0, R, n_r + 1)
    n = n_r + 1
    K = np.zeros((n, n))
    idx = np.arange(n_r)
    c = rh / h
    K[idx, idx] += c
    K[idx + 1, idx + 1] += c
    K[idx, idx + 1] -= c
    K[idx + 1, idx] -= c
    if k:
        K += np.diag(np.where(r > 0, w * k * k / np.where(r > 0, r, 1.0) ** 2, 0.0))
    return K, np.diag(w), w


def rayleigh_inequality_check(n_r: int = 256, trials: int = 100, R: float = 1.0, n_modes: int = 6,
                              seed: int = 0, m0: float | None = None) -> InequalityReport:
    """Randomized check of int|grad m|^2 - m0 int m^2 >= -m0 pi R^2 <m>^2 for
    even m with <m cos phi> = 0 and m0 = lambda3, up to an O(h^2) slack
    calibrated on the third Neumann eigenfunction."""
    from .specfun import bessel_j

    lam3 = neumann_eigenvalue(R, 2, 1)
    m0 = lam3 if m0 is None else m0
    forms = [_mode_forms(R, n_r, k) for k in range(n_modes)]
    ang = np.array([2 * math.pi] + [math.pi] * (n_modes - 1))
    r = np.linspace(0, R, n_r + 1)

    def quad(coeffs):
        grad = sum(ang[k] * coeffs[k] @ forms[k][0] @ coeffs[k] for k in range(n_modes))
        mass = sum(ang[k] * coeffs[k] @ forms[k][1] @ coeffs[k] for k in range(n_modes))
        mean = ang[0] * forms[0][2] @ coeffs[0] / (math.pi * R * R)
        return grad, mass, mean

    # calibration on the eigenfunction J_2(j' r / R) cos 2 phi
    jp = besselj_prime_zero(2, 1)
    eig = [np.zeros(n_r + 1) for _ in range(n_modes)]
    eig[2] = bessel_j(2, jp * r / R)
    g, mss, mean = quad(eig)
    eig_lhs = g - m0 * mss + m0 * math.pi * R * R * mean**2
    slack_c = 2.0 * abs(g / mss - lam3) / (R / n_r) ** 2

    rng = np.random.default_rng(seed)
    violations = 0
    worst = np.inf
    for _ in range(trials):
        coeffs = []
        for k in range(n_modes):
            deg = rng.integers(1, 6)
            a = rng.normal(size=deg)
            prof = sum(a[j] * (r / R) ** (2 * j) for j in range(deg)) * (r / R) ** k
            coeffs.append(prof * rng.normal())
        # enforce <m cos phi> = 0: int m_1 r dr = 0
        w1 = forms[1][2]
        shape = (r / R) ** 3
        coeffs[1] = coeffs[1] - (w1 @ coeffs[1]) / (w1 @ shape) * shape
        g, mss, mean = quad(coeffs)
        lhs = g - m0 * mss
        rhs = -m0 * math.pi * R * R * mean**2
        margin = (lhs - rhs) / mss
        slack = slack_c * (R / n_r) ** 2
        worst = min(worst, margin)
        if margin < -slack:
            violations += 1
    return InequalityReport(trials, violations, float(worst), slack_c, m0, float(eig_lhs))


# ---------------------------------------------------------------- traveling-wave operator


@dataclass
class TWOperator:
    """Discretized linearization about an expanded traveling wave.

    Unknowns are cosine coefficients k = 0..K-1 (K = n_phi/2, the angular
    Nyquist mode is excluded) of the myosin perturbation on the radial
    nodes of the boundary-fitted grid (origin only for k = 0), followed by
    the cosine coefficients of the radial boundary perturbation rho.
    """

    matrix: np.ndarray
    grid: object
    mapped: object
    V: float
    tw: object
    K: int
    m_index: list
    background: dict

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_m(self) -> int:
        return len(self.m_index)

    def to_vector(self, m_grid: np.ndarray, rho_grid: np.ndarray) -> np.ndarray:
        from .geometry import cosine_coefficients

        mc = cosine_coefficients(m_grid)[:, : self.K]
        rc = cosine_coefficients(np.asarray(rho_grid, dtype=float)[None, :])[0, : self.K]
        return np.concatenate([[mc[i, k] for i, k in self.m_index], rc])

    def from_vector(self, vec: np.ndarray):
        from .geometry import from_cosine_coefficients

        g = self.grid
        mc = np.zeros((g.n_r + 1, g.n_modes))
        for val, (i, k) in zip(vec[: self.n_m], self.m_index):
            mc[i, k] = val
        rc = np.zeros((1, g.n_modes))
        rc[0, : self.K] = vec[self.n_m:]
        return from_cosine_coefficients(mc, g.n_phi), from_cosine_coefficients(rc, g.n_phi)[0]

    def mass_functional(self) -> np.ndarray:
        """Row vector w with w . v = int m + int (R0 + rho_tw) rho M_tw dphi (the linearized mass)."""
        cols = []
        eye = np.eye(self.size)
        for j in range(self.size):
            cols.append(self._mass(*self.from_vector(eye[j])))
        return np.array(cols)

    def _mass(self, m: np.ndarray, rho: np.ndarray) -> float:
        b = self.background
        dth = 2 * np.pi / self.grid.n_phi
        return float(np.sum(self.mapped.W * m) * dth + np.sum(b["P"] * b["M_b"] * rho) * dth)


def _tw_background(tw, V: float, grid, mapped):
    """Traveling-wave data sampled on the mapped grid and on its boundary."""
    from .bifurcation import domain_quadrature

    x, y = mapped.positions()
    rp = np.maximum(np.hypot(x, y), 1e-12)
    tp = np.arctan2(y, x)
    shape = mapped.shape

    def G(r, t, d=""):
        base = tw.potential(r, t, V, d)
        if d == "":
            return base - V * r * np.cos(t)
        if d == "r":
            return base - V * np.cos(t)
        if d == "t":
            return base + V * r * np.sin(t)
        if d == "rt":
            return base + V * np.sin(t)
        return base

    qr, qt, qw = domain_quadrature(shape)
    from .geometry import area

    omega = area(shape)
    mean = float(np.sum(qw * np.exp(G(qr, qt) - tw.phi0))) / omega
    lam_t = tw.m0 / mean  # M = lam_t exp(G - phi0)
    M = lam_t * np.exp(G(rp, tp) - tw.phi0)
    Gx = np.cos(tp) * G(rp, tp, "r") - np.sin(tp) * G(rp, tp, "t") / rp
    t = grid.phi
    P = shape.radius(t)
    dP = shape.rho(t, 1)
    S = np.hypot(P, dP)
    return {
        "x": x, "y": y, "r": rp, "t": tp, "G": G(rp, tp), "M": M, "Mx": M * Gx, "lam_t": lam_t,
        "P": P, "dP": dP, "S": S,
        "Gr_b": G(P, t, "r"), "Gt_b": G(P, t, "t"), "Grr_b": G(P, t, "rr"), "Grt_b": G(P, t, "rt"),
        "Phir_b": tw.potential(P, t, V, "r"), "M_b": lam_t * np.exp(G(P, t) - tw.phi0),
    }


def _flux_parts(mapped, u: np.ndarray):
    """Face fluxes J g^{ab} d_b u: radial at half nodes and angular at nodes."""
    from .geometry import angular_derivative

    h = mapped.grid.h
    u_phi = angular_derivative(u)
    Fr = mapped.a_rr_h * (u[1:] - u[:-1]) / h + mapped.a_rp_h * 0.5 * (u_phi[1:] + u_phi[:-1])
    u_r = np.zeros_like(u)
    u_r[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    Fp = mapped.a_rp * u_r + mapped.a_pp * u_phi
    return Fr, Fp


def _curvature_variation(P, dP, d2P, rho, drho, d2rho):
    """First variation of the curvature of r = P(phi) in the direction rho."""
    N = P * P + 2 * dP * dP - P * d2P
    D = P * P + dP * dP
    dN = 2 * P * rho + 4 * dP * drho - rho * d2P - P * d2rho
    dD = 2 * P * rho + 2 * dP * drho
    return dN / D**1.5 - 1.5 * N * dD / D**2.5


def assemble_tw_operator(tw, V: float, n_r: int = 24, n_phi: int = 32, tol: float = 1e-12) -> TWOperator:
    """Dense linearization about the expanded traveling wave at velocity V.

    The potential perturbation solves Delta phi - zeta phi = -m + p_eff' int P rho
    on the wave domain with zeta (phi + rho d_r Phi) = -gamma delta kappa(rho).
    The boundary row is (S/P) (d_nu phi + delta(d_nu G)) with G = Phi - V x, and
    the myosin boundary flux is tied to that row so the linearized mass is
    conserved by the discretization.
    """
    from .elliptic import MappedDisk, MappedPotentialSolver, drop_nyquist
    from .geometry import PolarGrid, angular_derivative
    from .elliptic import assemble_divergence

    params = tw.params
    grid = PolarGrid(tw.R0, n_r, n_phi)
    shape = tw.shape(V)
    mapped = MappedDisk(shape, grid)
    bg = _tw_background(tw, V, grid, mapped)
    solver = MappedPotentialSolver(grid, params.zeta, tol=tol, max_iter=400)
    K = n_phi // 2
    m_index = [(0, 0)] + [(i, k) for i in range(1, n_r + 1) for k in range(K)]
    m_index.sort(key=lambda ik: (ik[1], ik[0]))
    op = TWOperator(np.zeros(0), grid, mapped, V, tw, K, m_index, bg)
    size = len(m_index) + K
    h = grid.h
    dth = 2 * np.pi / n_phi
    P, dP, S = bg["P"], bg["dP"], bg["S"]
    d2P = shape.rho(grid.phi, 2)
    Gr, Gt, Grr, Grt = bg["Gr_b"], bg["Gt_b"], bg["Grr_b"], bg["Grt_b"]
    N_G = P * Gr - dP * Gt / P
    G = bg["G"]
    M = bg["M"]
    FrG, FpG = _flux_parts(mapped, G)

    def apply(vec):
        m, rho = op.from_vector(vec)
        drho = angular_derivative(rho[None, :])[0]
        d2rho = angular_derivative(rho[None, :], 2)[0]
        # potential perturbation
        f = -m + params.dp_eff * float(np.sum(P * rho) * dth)
        g = -params.gamma * _curvature_variation(P, dP, d2P, rho, drho, d2rho) / params.zeta - rho * bg["Phir_b"]
        phi = solver.solve(mapped, f, g)
        Fr, Fp = _flux_parts(mapped, phi)
        net = assemble_divergence(Fr, Fp, np.zeros(n_phi), h)
        # d_r phi at r = R from the boundary half-cell balance (a_rp vanishes there)
        src = params.zeta * phi[-1] + drop_nyquist(f)[-1]
        dn_phi = (mapped.W[-1] * src - net[-1]) / mapped.J[-1]
        # first variation of the normal derivative of G under r = P + rho
        dN = rho * Gr + P * rho * Grr - drho * Gt / P - dP * rho * Grt / P + dP * Gt * rho / P**2
        dS = (P * rho + dP * drho) / S
        dNS = dN / S - N_G * dS / S**2
        rho_rate = (S / P) * (dn_phi + dNS)
        # myosin: div(grad m - m grad G - M grad phi)
        Frm, Fpm = _flux_parts(mapped, m)
        m_h = 0.5 * (m[1:] + m[:-1])
        M_h = 0.5 * (M[1:] + M[:-1])
        Fr_tot = Frm - m_h * FrG - M_h * Fr
        Fp_tot = Fpm - m * FpG - M * Fp
        Mb = bg["M_b"]
        Fb = -S * (rho * Mb * Gr * N_G / S + Mb * dNS + m[-1] * N_G / S + Mb * dn_phi)
        rate = assemble_divergence(Fr_tot, Fp_tot, Fb, h) / mapped.W
        rate[0] = np.mean(rate[0])
        return op.to_vector(rate, rho_rate)

    A = np.empty((size, size))
    eye = np.eye(size)
    for j in range(size):
        A[:, j] = apply(eye[j])
    op.matrix = A
    op.apply = apply
    return op


def _tw_myosin(tw, V: float, r, t) -> np.ndarray:
    """Normalized traveling-wave myosin of the expansion at velocity V, at physical polar points."""
    from .bifurcation import domain_quadrature
    from .geometry import area

    shape = tw.shape(V)
    qr, qt, qw = domain_quadrature(shape)
    e = np.exp(tw.potential(qr, qt, V) - tw.phi0 - V * qr * np.cos(qt))
    mean = float(np.sum(qw * e)) / area(shape)
    return tw.m0 * np.exp(tw.potential(r, t, V) - tw.phi0 - V * r * np.cos(t)) / mean


def tw_kernel_vectors(op: TWOperator, dV: float = 1e-4):
    """Shift vector v1 = (-d_x M, cos + P' sin / P) and the velocity derivative
    v2 = (d_V M, d_V rho_tw) of the wave family, in the operator's basis."""
    bg = op.background
    t = op.grid.phi
    m1 = -bg["Mx"]
    rho1 = np.cos(t) + bg["dP"] * np.sin(t) / bg["P"]
    V = op.V
    mp = _tw_myosin(op.tw, V + dV, bg["r"], bg["t"])
    mm = _tw_myosin(op.tw, V - dV, bg["r"], bg["t"])
    m2 = (mp - mm) / (2 * dV)
    rho2 = 2 * V * (op.tw.rho2_mode0 + op.tw.rho2_mode2 * np.cos(2 * t))
    return op.to_vector(m1, rho1), op.to_vector(m2, rho2)


@dataclass
class TWKernelReport:
    V: float
    smallest: np.ndarray
    shift_residual: float
    jordan_residual: float
    adjoint_residual: float
    orthogonality: float
    orthogonality_quadrature: float
    budget: float
    eigen_budget: float

    @property
    def three_small(self) -> bool:
        return bool(np.all(np.abs(self.smallest[:3]) <= self.eigen_budget))

    def to_dict(self) -> dict:
        return {
            "V": self.V, "smallest_abs": [float(abs(x)) for x in self.smallest],
            "smallest_re": [float(x.real) for x in self.smallest], "smallest_im": [float(x.imag) for x in self.smallest],
            "shift_residual": self.shift_residual, "jordan_residual": self.jordan_residual,
            "adjoint_residual": self.adjoint_residual, "orthogonality": self.orthogonality,
            "orthogonality_quadrature": self.orthogonality_quadrature,
            "budget": self.budget, "eigen_budget": self.eigen_budget, "three_small": self.three_small,
        }


def tw_mass_eigenvector_check(tw, V: float, n_r: int = 24, n_phi: int = 32, op: TWOperator | None = None) -> TWKernelReport:
    """Kernel structure of the traveling-wave linearization at velocity V.

    Reports the relative residuals of A v1 = 0 and A v2 = v1, the cancellation
    ratio |w A| / (|w| |A|) of the linearized mass functional w, the
    orthogonality w . v1 (discrete and by the divergence-theorem quadrature),
    and the smallest eigenvalues. Residual norms are weighted by cell volume.
    The wave is exact only to O(V^2), so the shift residual is O(V^2) and the
    budget for the Jordan relation is shift_residual / V. Near-zero
    eigenvalues of a perturbed Jordan pair scale like the square root of the
    perturbation, so the eigenvalue budget is sqrt(budget) times the largest
    eigenvalue magnitude among the six smallest.
    """
    if op is None:
        op = assemble_tw_operator(tw, V, n_r, n_phi)
    A = op.matrix
    v1, v2 = tw_kernel_vectors(op)
    # cell-volume weighted norm; plain Euclidean norms of FV rows grow like 1/h at the rim
    from .elliptic import radial_weights

    wr = radial_weights(op.grid.R, op.grid.n_r)
    wr = np.where(wr > 0, wr, wr[1] / 8.0)
    sw = np.sqrt(np.concatenate([[wr[i] for i, _ in op.m_index], np.full(op.K, op.grid.R)]))
    n1 = np.linalg.norm(sw * v1)
    shift = float(np.linalg.norm(sw * (A @ v1)) / n1)
    jordan = float(np.linalg.norm(sw * (A @ v2 - v1)) / n1)
    w = op.mass_functional()
    adj = float(np.max(np.abs(w @ A)) / np.max(np.abs(w) @ np.abs(A)))
    ortho = float(abs(w @ v1) / (np.abs(w) @ np.abs(v1)))
    # divergence theorem: int d_x M dxdy = int M nu_x ds with nu_x ds = (P cos + P' sin) dphi
    from .bifurcation import domain_quadrature

    shape = op.mapped.shape
    qr, qt, qw = domain_quadrature(shape, 96, 192)
    Mq = _tw_myosin(tw, V, qr, qt)
    # d_x M by central differences in x at the quadrature points
    dx = 1e-5
    xq, yq = qr * np.cos(qt), qr * np.sin(qt)
    Mp = _tw_myosin(tw, V, np.hypot(xq + dx, yq), np.arctan2(yq, xq + dx))
    Mm = _tw_myosin(tw, V, np.hypot(xq - dx, yq), np.arctan2(yq, xq - dx))
    bulk = float(np.sum(qw * (Mp - Mm) / (2 * dx)))
    tb = 2 * np.pi * np.arange(192) / 192
    P, dP = shape.radius(tb), shape.rho(tb, 1)
    edge = float(np.sum(_tw_myosin(tw, V, P, tb) * (P * np.cos(tb) + dP * np.sin(tb))) * 2 * np.pi / 192)
    ortho_q = abs(edge - bulk) / max(abs(edge), float(np.sum(qw * Mq)) * 1e-12)
    lam = np.linalg.eigvals(A)
    lam = lam[np.argsort(np.abs(lam))]
    # an O(V^2) shift residual differentiates to an O(V) defect in the Jordan relation
    budget = max(shift / V, adj) if V > 0 else max(shift, adj)
    eig_budget = math.sqrt(budget) * float(np.max(np.abs(lam[:6])))
    return TWKernelReport(V, lam[:6], shift, jordan, adj, ortho, float(ortho_q), budget, eig_budget)
