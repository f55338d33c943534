"""Modified Bessel functions I_n and zeros of J_n'.

Everything here is written directly against numpy; no special-function
library is used.  Arguments in this package stay below ~50, so the
positive-term power series is accurate everywhere it is used.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["bessel_i", "bessel_i_prime", "bessel_j", "bessel_j_prime", "besselj_prime_zero"]

_SERIES_LIMIT = 50.0
_MAX_ORDER = 8


def _check(order: int, x) -> np.ndarray:
    if int(order) != order or order < 0:
        raise ValueError(f"order must be a non-negative integer, got {order!r}")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("argument must be non-negative")
    if np.any(~np.isfinite(xa)):
        raise ValueError("argument must be finite")
    return xa


def _series_i(n: int, x: np.ndarray) -> np.ndarray:
    # sum_k (x/2)^(2k+n) / (k! (k+n)!) ; every term is positive
    half = 0.5 * x
    term = half**n / math.factorial(n)
    total = term.copy()
    q = half * half
    kmax = int(2.0 * float(np.max(x, initial=0.0))) + 40
    for k in range(kmax):
        term = term * q / ((k + 1) * (k + 1 + n))
        total = total + term
        if np.all(term <= 1e-17 * total):
            break
    return total


def _asymptotic_i(n: int, x: np.ndarray) -> np.ndarray:
    mu = 4.0 * n * n
    total = np.ones_like(x)
    term = np.ones_like(x)
    for k in range(1, 60):
        term = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return np.exp(x) / np.sqrt(2.0 * np.pi * x) * total


def bessel_i(order: int, x):
    """Modified Bessel function of the first kind, I_order(x).

    Parameters
    ----------
    order : int
        Non-negative integer order.
    x : float or array_like
        Non-negative argument.

    Returns
    -------
    float or ndarray
        I_order(x), same shape as ``x``.
    """
    xa = _check(order, x)
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa)
    out = np.empty_like(xa)
    small = xa <= _SERIES_LIMIT
    if np.any(small):
        out[small] = _series_i(int(order), xa[small])
    if np.any(~small):
        out[~small] = _asymptotic_i(int(order), xa[~small])
    return float(out[0]) if scalar else out


def bessel_i_prime(order: int, x):
    """Derivative I_n'(x) = (I_{n-1}(x) + I_{n+1}(x)) / 2, with I_{-1} = I_1."""
    xa = _check(order, x)
    if order == 0:
        return bessel_i(1, xa if xa.ndim else float(xa))
    val = 0.5 * (np.asarray(bessel_i(order - 1, xa)) + np.asarray(bessel_i(order + 1, xa)))
    return float(val) if np.ndim(val) == 0 else val


def _quad_nodes(x: np.ndarray, order: int) -> int:
    # trapezoid on a periodic analytic integrand converges geometrically
    # once the node count exceeds roughly x + order
    return int(2 * (float(np.max(x, initial=0.0)) + order) + 64)


def bessel_j(order: int, x):
    """J_order(x) via the Bessel integral (1/pi) int_0^pi cos(n t - x sin t) dt."""
    xa = _check(order, x)
    n_nodes = _quad_nodes(np.atleast_1d(xa), order)
    t = (np.arange(n_nodes) + 0.5) * np.pi / n_nodes
    vals = np.cos(order * t - np.multiply.outer(xa, np.sin(t))).mean(axis=-1)
    return float(vals) if np.ndim(vals) == 0 else vals


def bessel_j_prime(order: int, x):
    """J_order'(x) = (1/pi) int_0^pi sin(t) sin(n t - x sin t) dt."""
    xa = _check(order, x)
    n_nodes = _quad_nodes(np.atleast_1d(xa), order + 1)
    t = (np.arange(n_nodes) + 0.5) * np.pi / n_nodes
    vals = (np.sin(t) * np.sin(order * t - np.multiply.outer(xa, np.sin(t)))).mean(axis=-1)
    return float(vals) if np.ndim(vals) == 0 else vals


def besselj_prime_zero(order: int, index: int) -> float:
    """The ``index``-th positive zero of J_order'.

    Sign changes are bracketed on a grid finer than the asymptotic zero
    spacing (pi), then refined by bisection.
    """
    if int(order) != order or order < 0:
        raise ValueError("order must be a non-negative integer")
    if int(index) != index or index < 1:
        raise ValueError("index must be a positive integer")
    step = 0.05
    a = 1e-6
    fa = bessel_j_prime(order, a)
    found = 0
    while True:
        b = a + step
        fb = bessel_j_prime(order, b)
        if fa == 0.0:
            found += 1
            if found == index:
                return a
        elif fa * fb < 0:
            found += 1
            if found == index:
                return _bisect(lambda s: bessel_j_prime(order, s), a, b, fa)
        a, fa = b, fb


def _bisect(f, a: float, b: float, fa: float, tol: float = 1e-13) -> float:
    for _ in range(200):
        c = 0.5 * (a + b)
        fc = f(c)
        if fc == 0.0 or (b - a) < tol:
            return c
        if fa * fc < 0:
            b = c
        else:
            a, fa = c, fc
    return 0.5 * (a + b)
