"""Self-consistent spectral transform on the negative real axis.

For a spectral measure H on [0, inf) and aspect ratio gamma, m(z) is the
unique positive solution of

    1/m + z = gamma * int x / (1 + m x) dH(x),        z < 0,

extended to z = 0 when gamma > 1.  Multiplying through by m gives the
scaled form

    g(m) = 1 + z m - gamma * int m x / (1 + m x) dH(x),

which is strictly decreasing on m > 0 (g'(m) = z - gamma * int x/(1+mx)^2 dH
is negative), with g(0) = 1 and g(-1/z) <= 0.  The root is therefore unique
in (0, -1/z] and a bracketed Newton iteration cannot escape or stall.

The returned residual is the defining one, |1/m + z - gamma*int x/(1+mx) dH|.
That expression subtracts quantities of size |z|, so for |z| ~ 1e4 plain
float64 evaluation bottoms out near 1e-12 no matter how good the root is.
The final polish and the residual are therefore computed in extended
precision (80-bit on x86) and only then rounded back to float.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure

MAX_ITER = 100_000
_LD = np.longdouble


class NonConvergenceError(RuntimeError):
    """Solver ran out of iterations or hit an infeasible configuration."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = float(residual)


@dataclass(frozen=True)
class StieltjesSolution:
    """Solution record at one evaluation point.

    m_prime is the derivative of m along the real axis, obtained from the
    differentiated fixed point, never from finite differences.
    """

    z: float
    m: float
    m_prime: float
    residual: float


def _g(m, z, locs, wts, gamma):
    mx = m * locs
    return 1.0 + z * m - gamma * np.sum(wts * mx / (1.0 + mx))


def _g_prime(m, z, locs, wts, gamma):
    return z - gamma * np.sum(wts * locs / (1.0 + m * locs) ** 2)


def _bracketed_newton(z, locs, wts, gamma, lo, hi):
    """Root of g in (lo, hi], assuming g(lo) > 0 >= g(hi)."""
    m = 0.5 * (lo + hi)
    for _ in range(MAX_ITER):
        gm = _g(m, z, locs, wts, gamma)
        if gm > 0.0:
            lo = m
        else:
            hi = m
        if hi - lo <= 8.0 * np.finfo(float).eps * hi:
            break
        gp = _g_prime(m, z, locs, wts, gamma)
        m_next = m - gm / gp
        if not (lo < m_next < hi):
            m_next = 0.5 * (lo + hi)
        if m_next == m:
            break
        m = m_next
    else:
        raise NonConvergenceError(
            "fixed-point solve exceeded the iteration cap",
            abs(float(_g(m, z, locs, wts, gamma)) / max(m, np.finfo(float).tiny)),
        )
    return 0.5 * (lo + hi)


def _polish_extended(m, z, locs_ld, wts_ld, gamma):
    """A few Newton steps in extended precision around a converged root."""
    m = _LD(m)
    z = _LD(z)
    g_ld = _LD(gamma)
    for _ in range(4):
        gm = _g(m, z, locs_ld, wts_ld, g_ld)
        gp = _g_prime(m, z, locs_ld, wts_ld, g_ld)
        step = gm / gp
        if m - step <= 0:
            break
        m = m - step
    return m


def _finish(z, m_ld, locs_ld, wts_ld, gamma):
    z_ld = _LD(z)
    g_ld = _LD(gamma)
    one = _LD(1.0)
    denom = one + m_ld * locs_ld
    int_first = np.sum(wts_ld * locs_ld / denom)
    int_second = np.sum(wts_ld * locs_ld**2 / denom**2)
    residual = abs(one / m_ld + z_ld - g_ld * int_first)

    slope_inv = one / m_ld**2 - g_ld * int_second
    if slope_inv <= 0:
        raise NonConvergenceError(
            "derivative identity is singular at the computed root", float(residual)
        )
    m_prime = one / slope_inv
    return StieltjesSolution(
        z=float(z), m=float(m_ld), m_prime=float(m_prime), residual=float(residual)
    )


def _check_measure(H: DiscreteMeasure):
    if not isinstance(H, DiscreteMeasure):
        raise TypeError("H must be a DiscreteMeasure")
    return H.locations, H.weights


def solve_m(z: float, H: DiscreteMeasure, gamma: float) -> StieltjesSolution:
    """Solve the fixed point at a point z < 0.

    Raises NonConvergenceError if the iteration cap is hit (the bracketed
    construction makes that unreachable in practice) and ValueError for
    invalid z, gamma, or H.
    """
    locs, wts = _check_measure(H)
    z = float(z)
    gamma = float(gamma)
    if not np.isfinite(z) or z >= 0:
        raise ValueError(f"z must be finite and negative, got {z!r}")
    if not np.isfinite(gamma) or gamma <= 0:
        raise ValueError(f"gamma must be finite and positive, got {gamma!r}")

    hi = -1.0 / z
    if _g(hi, z, locs, wts, gamma) > 0.0:
        # only possible when H puts (nearly) all mass at zero
        m = hi
    else:
        m = _bracketed_newton(z, locs, wts, gamma, 0.0, hi)
    locs_ld = locs.astype(_LD)
    wts_ld = wts.astype(_LD)
    m_ld = _polish_extended(m, z, locs_ld, wts_ld, gamma)
    return _finish(z, m_ld, locs_ld, wts_ld, gamma)


def m_at_zero(H: DiscreteMeasure, gamma: float) -> StieltjesSolution:
    """Continuation of the fixed point to z = 0, defined only for gamma > 1."""
    locs, wts = _check_measure(H)
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma <= 1:
        raise ValueError(
            f"m(0) exists only in the overparametrized regime gamma > 1, got {gamma!r}"
        )
    mass_pos = float(np.sum(wts[locs > 0]))
    if gamma * mass_pos <= 1.0:
        raise ValueError(
            "H carries too little mass on positive locations: "
            f"gamma * H((0, inf)) = {gamma * mass_pos:g} <= 1, no positive root"
        )
    hi = 1.0
    for _ in range(200):
        if _g(hi, 0.0, locs, wts, gamma) < 0.0:
            break
        hi *= 2.0
    else:
        raise NonConvergenceError("could not bracket the z = 0 root", np.inf)
    m = _bracketed_newton(0.0, locs, wts, gamma, 0.0, hi)
    locs_ld = locs.astype(_LD)
    wts_ld = wts.astype(_LD)
    m_ld = _polish_extended(m, 0.0, locs_ld, wts_ld, gamma)
    return _finish(0.0, m_ld, locs_ld, wts_ld, gamma)


def f_eval(z: float, H: DiscreteMeasure, gamma: float) -> tuple[float, float]:
    """Evaluate f(z) = 1/m(-z) - z and its derivative for z > 0.

    Uses the algebraically equivalent forms

        f(z)  = gamma * int x / (1 + m(-z) x) dH(x)
        f'(z) = gamma * m'(-z) * int x^2 / (1 + m(-z) x)^2 dH(x)

    which follow from the fixed point and stay accurate for large z, where
    the literal 1/m - z subtraction loses digits.
    """
    z = float(z)
    if not np.isfinite(z) or z <= 0:
        raise ValueError(f"f is evaluated on z > 0, got {z!r}")
    sol = solve_m(-z, H, gamma)
    locs = H.locations.astype(_LD)
    wts = H.weights.astype(_LD)
    m = _LD(sol.m)
    denom = _LD(1.0) + m * locs
    f_val = gamma * np.sum(wts * locs / denom)
    f_prime = gamma * _LD(sol.m_prime) * np.sum(wts * locs**2 / denom**2)
    return float(f_val), float(f_prime)


def df2(kappa: float, eigenvalues) -> float:
    """Second-order degrees of freedom sum_k s_k^2 / (kappa + s_k)^2."""
    kappa = float(kappa)
    if not np.isfinite(kappa) or kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa!r}")
    s = np.asarray(eigenvalues, dtype=float)
    if np.any(s < 0):
        raise ValueError("eigenvalues must be nonnegative")
    return float(np.sum(s**2 / (kappa + s) ** 2))
