"""Model constants, boundary shapes, polar grids and the boundary-fitted map.

A shape is a disk of radius ``R`` perturbed by an even cosine series
rho(phi) = sum_k rho_k cos(k phi), translated by ``Xc`` along x.  The map
sends the reference disk B_R to the perturbed domain so that radial lines
meet the boundary along its normal with unit speed, which turns the
physical normal derivative into d/dr at r = R.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DegenerateDomainError",
    "ModelParams",
    "BoundaryShape",
    "PolarGrid",
    "PolarField",
    "effective_pressure",
    "effective_pressure_derivative",
    "curvature",
    "area",
    "recenter",
    "cutoff",
    "boundary_map",
    "map_derivatives",
    "map_jacobian",
]


class DegenerateDomainError(ValueError):
    """Raised when R + rho(phi) <= 0 somewhere, or the map folds over."""


@dataclass(frozen=True)
class ModelParams:
    """Physical constants (viscosity and contractility scaled to one).

    Attributes
    ----------
    zeta : float
        Adhesion drag coefficient, > 0.
    gamma : float
        Surface tension coefficient, > 0.
    p_h : float
        Homeostatic pressure constant.
    k_e : float
        Area stiffness, >= 0; the effective pressure is p_h - k_e * area.
    """

    zeta: float
    gamma: float
    p_h: float
    k_e: float = 0.0

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        if not self.gamma >= 0:
            raise ValueError("gamma must be non-negative")
        if not self.k_e >= 0:
            raise ValueError("k_e must be non-negative")

    def p_eff(self, area_value: float) -> float:
        return self.p_h - self.k_e * area_value

    @property
    def dp_eff(self) -> float:
        return -self.k_e

    def density(self, R: float) -> float:
        """Average myosin density of the resting disk, p_eff(pi R^2) - gamma/R."""
        return self.p_eff(np.pi * R * R) - self.gamma / R

    @classmethod
    def with_density(cls, m0: float, R: float, zeta: float, gamma: float, k_e: float = 0.0):
        """Parameters for which the disk of radius ``R`` has density ``m0``."""
        return cls(zeta=zeta, gamma=gamma, p_h=m0 + gamma / R + k_e * np.pi * R * R, k_e=k_e)

    def to_dict(self) -> dict:
        return {"zeta": self.zeta, "gamma": self.gamma, "p_h": self.p_h, "k_e": self.k_e}


def effective_pressure(area_value: float, params: ModelParams) -> float:
    if not area_value > 0:
        raise ValueError("area must be positive")
    return params.p_eff(area_value)


def effective_pressure_derivative(params: ModelParams) -> float:
    return params.dp_eff


@dataclass(frozen=True)
class BoundaryShape:
    """Even boundary perturbation stored as cosine coefficients."""

    R: float
    rho_cos: np.ndarray = field(default_factory=lambda: np.zeros(1))
    Xc: float = 0.0

    def __post_init__(self):
        coeffs = np.atleast_1d(np.asarray(self.rho_cos, dtype=float)).copy()
        coeffs.setflags(write=False)
        object.__setattr__(self, "rho_cos", coeffs)
        if not self.R > 0:
            raise DegenerateDomainError("base radius must be positive")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("non-finite shape coefficients")

    @property
    def n_modes(self) -> int:
        return self.rho_cos.size

    def rho(self, phi, deriv: int = 0) -> np.ndarray:
        """rho or its ``deriv``-th angular derivative (0, 1 or 2) at ``phi``."""
        phi = np.asarray(phi, dtype=float)
        k = np.arange(self.n_modes)
        arg = np.multiply.outer(phi, k)
        if deriv == 0:
            basis = np.cos(arg)
        elif deriv == 1:
            basis = -k * np.sin(arg)
        elif deriv == 2:
            basis = -(k**2) * np.cos(arg)
        elif deriv == 3:
            basis = k**3 * np.sin(arg)
        else:
            raise ValueError("deriv must be 0..3")
        return basis @ self.rho_cos

    def radius(self, phi) -> np.ndarray:
        return self.R + self.rho(phi)

    def check(self, n_check: int = 512) -> None:
        phi = 2 * np.pi * np.arange(max(n_check, 4 * self.n_modes)) / max(n_check, 4 * self.n_modes)
        if np.min(self.radius(phi)) <= 0:
            raise DegenerateDomainError("R + rho(phi) <= 0 somewhere on the boundary")

    def with_coefficients(self, coeffs, Xc: float | None = None) -> "BoundaryShape":
        return BoundaryShape(self.R, coeffs, self.Xc if Xc is None else Xc)

    @classmethod
    def from_samples(cls, R: float, values, Xc: float = 0.0, sine_tol: float = 1e-10):
        """Build from samples on phi_j = 2 pi j / n; odd (sine) content is rejected."""
        values = np.asarray(values, dtype=float)
        n = values.size
        spec = np.fft.rfft(values) / n
        scale = max(1.0, float(np.max(np.abs(values))))
        if np.max(np.abs(spec.imag)) > sine_tol * scale:
            raise ValueError("shape has sine components; only even shapes are supported")
        coeffs = 2.0 * spec.real
        coeffs[0] *= 0.5
        if n % 2 == 0:
            coeffs[-1] *= 0.5
        return cls(R, coeffs, Xc)

    def to_json(self) -> str:
        return json.dumps({"R": self.R, "rho_cos": [float(c) for c in self.rho_cos], "Xc": self.Xc})

    @classmethod
    def from_json(cls, text: str) -> "BoundaryShape":
        data = json.loads(text)
        return cls(float(data["R"]), data["rho_cos"], float(data.get("Xc", 0.0)))


def curvature(shape: BoundaryShape, phi) -> np.ndarray:
    """Signed curvature of r = R + rho(phi) at the angles ``phi``."""
    phi = np.asarray(phi, dtype=float)
    P = shape.radius(phi)
    if np.any(P <= 0):
        raise DegenerateDomainError("R + rho(phi) <= 0")
    d1 = shape.rho(phi, 1)
    d2 = shape.rho(phi, 2)
    return (P * P + 2 * d1 * d1 - d2 * P) / (P * P + d1 * d1) ** 1.5


def area(shape: BoundaryShape) -> float:
    """Enclosed area, exact for the cosine representation."""
    c = shape.rho_cos
    base = shape.R + c[0]
    return float(np.pi * base * base + 0.5 * np.pi * np.sum(c[1:] ** 2))


def recenter(shape: BoundaryShape) -> BoundaryShape:
    """Move the cos(phi) coefficient into the center abscissa."""
    c = np.array(shape.rho_cos, dtype=float)
    if c.size < 2:
        return shape
    shift = c[1]
    c[1] = 0.0
    return BoundaryShape(shape.R, c, shape.Xc + shift)


@dataclass(frozen=True)
class PolarGrid:
    """Tensor grid on B_R: ``n_r`` radial intervals (n_r + 1 nodes incl. r = 0 and r = R)
    and ``n_phi`` equispaced angles on the full circle."""

    R: float
    n_r: int
    n_phi: int

    def __post_init__(self):
        if self.n_r < 4 or self.n_phi < 4 or self.n_phi % 2:
            raise ValueError("need n_r >= 4 and an even n_phi >= 4")

    @property
    def h(self) -> float:
        return self.R / self.n_r

    @property
    def r(self) -> np.ndarray:
        return np.linspace(0.0, self.R, self.n_r + 1)

    @property
    def r_half(self) -> np.ndarray:
        return (np.arange(self.n_r) + 0.5) * self.h

    @property
    def phi(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_phi) / self.n_phi

    @property
    def n_modes(self) -> int:
        return self.n_phi // 2 + 1

    def radial_weights(self) -> np.ndarray:
        """Cell areas per unit angle on the disk: int r dr over each control cell."""
        h = self.h
        w = self.r * h
        w[0] = h * h / 8.0
        w[-1] = 0.5 * h * (self.R - 0.25 * h)
        return w

    def integrate(self, values: np.ndarray) -> float:
        """Integral over the undeformed disk of a field sampled on the grid."""
        return float(2 * np.pi * np.mean(values, axis=1) @ self.radial_weights())


@dataclass
class PolarField:
    """Scalar samples on a :class:`PolarGrid`, shape (n_r + 1, n_phi)."""

    grid: PolarGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.n_r + 1, self.grid.n_phi)
        if self.values.shape != expected:
            raise ValueError(f"values must have shape {expected}, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite field values")

    def modes(self) -> np.ndarray:
        """Cosine coefficients per radius, shape (n_r + 1, n_phi/2 + 1)."""
        return cosine_coefficients(self.values)

    def spectral_tail(self) -> float:
        """Largest magnitude of the highest retained cosine mode (resolution check)."""
        return float(np.max(np.abs(self.modes()[:, -1])))

    def to_csv(self) -> str:
        rr, pp = np.meshgrid(self.grid.r, self.grid.phi, indexing="ij")
        lines = ["r,phi,value"]
        for a, b, c in zip(rr.ravel(), pp.ravel(), self.values.ravel()):
            lines.append(f"{a:.12g},{b:.12g},{c:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, R: float | None = None) -> "PolarField":
        rows = [ln for ln in text.strip().splitlines()[1:] if ln.strip()]
        data = np.array([[float(v) for v in ln.split(",")] for ln in rows])
        r_nodes = np.unique(data[:, 0])
        p_nodes = np.unique(data[:, 1])
        grid = PolarGrid(float(R if R is not None else r_nodes[-1]), r_nodes.size - 1, p_nodes.size)
        return cls(grid, data[:, 2].reshape(r_nodes.size, p_nodes.size))


def cosine_coefficients(values: np.ndarray) -> np.ndarray:
    """Cosine coefficients along the last axis for samples on phi_j = 2 pi j / n."""
    n = values.shape[-1]
    spec = np.fft.rfft(values, axis=-1).real / n
    spec[..., 1:] *= 2.0
    if n % 2 == 0:
        spec[..., -1] *= 0.5
    return spec


def from_cosine_coefficients(coeffs: np.ndarray, n_phi: int) -> np.ndarray:
    """Inverse of :func:`cosine_coefficients`."""
    spec = np.array(coeffs, dtype=complex)
    spec[..., 1:] *= 0.5
    if n_phi % 2 == 0:
        spec[..., -1] *= 2.0
    full = np.zeros(spec.shape[:-1] + (n_phi // 2 + 1,), dtype=complex)
    k = min(spec.shape[-1], full.shape[-1])
    full[..., :k] = spec[..., :k]
    return np.fft.irfft(full * n_phi, n=n_phi, axis=-1)


def angular_derivative(values: np.ndarray, order: int = 1) -> np.ndarray:
    """Spectral d^order/dphi^order along the last axis (Nyquist mode dropped for odd orders)."""
    n = values.shape[-1]
    k = np.fft.rfftfreq(n, 1.0 / n)
    spec = np.fft.rfft(values, axis=-1) * (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        spec[..., -1] = 0.0
    return np.fft.irfft(spec, n=n, axis=-1)


def cutoff(r, R: float, deriv: int = 0):
    """Quintic smoothstep: 0 for r <= R/2, 1 for r >= 2R/3, C^2 in between."""
    r = np.asarray(r, dtype=float)
    width = R / 6.0
    t = np.clip((r - 0.5 * R) / width, 0.0, 1.0)
    if deriv == 0:
        return t**3 * (10 - 15 * t + 6 * t * t)
    if deriv == 1:
        return 30 * t * t * (1 - t) ** 2 / width
    raise ValueError("deriv must be 0 or 1")


def _map_parts(shape: BoundaryShape, eps: float, r, phi):
    r = np.asarray(r, dtype=float)
    phi = np.asarray(phi, dtype=float)
    R = shape.R
    P = R + eps * shape.rho(phi)
    if np.any(P <= 0):
        raise DegenerateDomainError("R + eps*rho(phi) <= 0")
    q = eps * shape.rho(phi, 1)
    P1 = q
    q1 = eps * shape.rho(phi, 2)
    S = np.sqrt(q * q + P * P)
    S1 = (q * q1 + P * P1) / S
    chi = cutoff(r, R)
    chi1 = cutoff(r, R, 1)
    A = (R - r) * chi
    A1 = -chi + (R - r) * chi1
    T = 1.0 - P / S
    U = q / S
    T1 = -(P1 * S - P * S1) / (S * S)
    U1 = (q1 * S - q * S1) / (S * S)
    return dict(r=r, phi=phi, P=P, P1=P1, chi=chi, chi1=chi1, A=A, A1=A1, T=T, U=U, T1=T1, U1=U1)


def boundary_map(shape: BoundaryShape, eps: float, r, phi):
    """Image (x, y) of reference point (r, phi), relative to the shape center.

    Uses x = (r + eps*eta) cos(phi) - eps*sigma sin(phi) and the rotated
    counterpart for y, where eps*eta = chi*eps*rho + A*(1 - P/S) and
    eps*sigma = A*q/S with P = R + eps*rho, q = eps*rho', S = |(q, P)| and
    A = (R - r)*chi.
    """
    p = _map_parts(shape, eps, r, phi)
    radial = p["r"] + p["chi"] * (p["P"] - shape.R) + p["A"] * p["T"]
    tangential = p["A"] * p["U"]
    c, s = np.cos(p["phi"]), np.sin(p["phi"])
    return radial * c - tangential * s, radial * s + tangential * c


def map_derivatives(shape: BoundaryShape, eps: float, r, phi):
    """Analytic (x_r, x_phi, y_r, y_phi) of :func:`boundary_map`."""
    p = _map_parts(shape, eps, r, phi)
    radial = p["r"] + p["chi"] * (p["P"] - shape.R) + p["A"] * p["T"]
    tangential = p["A"] * p["U"]
    # components in the rotating frame (e_r, e_phi)
    dr_er = 1.0 + p["chi1"] * (p["P"] - shape.R) + p["A1"] * p["T"]
    dr_ep = p["A1"] * p["U"]
    dp_er = p["chi"] * p["P1"] + p["A"] * p["T1"] - tangential
    dp_ep = radial + p["A"] * p["U1"]
    c, s = np.cos(p["phi"]), np.sin(p["phi"])
    return dr_er * c - dr_ep * s, dp_er * c - dp_ep * s, dr_er * s + dr_ep * c, dp_er * s + dp_ep * c


def map_jacobian(shape: BoundaryShape, eps: float, r, phi):
    """Jacobian determinant of the map, written in the (eta, sigma) form
    J = (1 + e*eta_r)(r + e*eta) + e*sigma_phi (1 + e*eta_r) + e^2 sigma sigma_r - e^2 sigma_r eta_phi."""
    p = _map_parts(shape, eps, r, phi)
    e_eta = p["chi"] * (p["P"] - shape.R) + p["A"] * p["T"]
    e_eta_r = p["chi1"] * (p["P"] - shape.R) + p["A1"] * p["T"]
    e_eta_phi = p["chi"] * p["P1"] + p["A"] * p["T1"]
    e_sig = p["A"] * p["U"]
    e_sig_r = p["A1"] * p["U"]
    e_sig_phi = p["A"] * p["U1"]
    return (1 + e_eta_r) * (p["r"] + e_eta) + e_sig_phi * (1 + e_eta_r) + e_sig * e_sig_r - e_sig_r * e_eta_phi
