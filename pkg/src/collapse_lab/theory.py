"""Limiting risk of the mixed-label iteration and mixing-weight analysis.

All risks decompose as sigma2 * c(w) * V + bstar * B where V and B are the
variance and bias shapes of the t -> infinity iterate.  The mixing constant

    c(w) = (w^2 + (1-w)^2) / (w (2 - w))

is the long-run noise amplification of mixing fresh labels (weight w) with
labels generated by the previous model (weight 1 - w).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .measures import DiscreteMeasure
from .stieltjes import f_eval, m_at_zero, solve_m

W_MIN = 1e-6
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
GSS_TOL = 1e-6


@dataclass(frozen=True)
class RiskDecomposition:
    bias: float
    variance: float
    total: float

    @classmethod
    def from_parts(cls, bias: float, variance: float) -> "RiskDecomposition":
        bias = float(bias)
        variance = float(variance)
        return cls(bias=bias, variance=variance, total=bias + variance)


@dataclass(frozen=True)
class LimitModel:
    """Problem description for the limiting formulas.

    H is the spectral law of the covariance, G the signal-weighted spectral
    law, gamma > 1 the feature/sample aspect ratio.
    """

    H: DiscreteMeasure
    G: DiscreteMeasure
    gamma: float
    sigma2: float
    bstar: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 1):
            raise ValueError(f"gamma must exceed 1, got {self.gamma!r}")
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2!r}")
        if not (np.isfinite(self.bstar) and self.bstar > 0):
            raise ValueError(f"bstar must be positive, got {self.bstar!r}")


def clamp_weight(w: float) -> float:
    """Mixing weights live in [W_MIN, 1 - W_MIN]; endpoints are clamped in."""
    w = float(w)
    if not np.isfinite(w):
        raise ValueError(f"mixing weight must be finite, got {w!r}")
    return min(max(w, W_MIN), 1.0 - W_MIN)


def c_of_w(w: float) -> float:
    return (w * w + (1.0 - w) ** 2) / (w * (2.0 - w))


def interpolator_limit_risk(model: LimitModel, w: float) -> RiskDecomposition:
    """Limit risk of the minimum-norm interpolation iterate as t -> infinity."""
    w = clamp_weight(w)
    sol = m_at_zero(model.H, model.gamma)
    ratio = sol.m_prime / sol.m**2
    variance_shape = ratio - 1.0
    m0 = sol.m
    bias_shape = ratio * model.G.integrate(lambda x: x / (1.0 + m0 * x) ** 2)
    return RiskDecomposition.from_parts(
        model.bstar * bias_shape,
        model.sigma2 * c_of_w(w) * variance_shape,
    )


def _ridge_shapes(H: DiscreteMeasure, G: DiscreteMeasure, gamma: float, w: float, lam: float):
    m1 = solve_m(-lam / w, H, gamma).m
    m2 = solve_m(-lam / (2.0 - w), H, gamma).m
    i1 = H.integrate(lambda x: x / (1.0 + m1 * x))
    i2 = H.integrate(lambda x: x / (1.0 + m2 * x))
    variance_shape = (w * (2.0 - w) / (2.0 * (1.0 - w))) * (gamma / lam) * (i1 - i2)
    num = G.integrate(lambda x: x / (1.0 + m1 * x) ** 2)
    den = 1.0 - gamma * H.integrate(lambda x: (m1 * x) ** 2 / (1.0 + m1 * x) ** 2)
    if den <= 0:
        raise ArithmeticError(
            f"bias denominator {den:g} not positive; fixed point left its stable branch"
        )
    return num / den, variance_shape


def _check_lam(lam: float) -> float:
    lam = float(lam)
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"ridge penalty must be positive, got {lam!r}")
    return lam


def ridge_limit_risk(model: LimitModel, w: float, lam: float) -> RiskDecomposition:
    """Limit risk of the ridge iterate, general H and G."""
    w = clamp_weight(w)
    lam = _check_lam(lam)
    bias_shape, variance_shape = _ridge_shapes(model.H, model.G, model.gamma, w, lam)
    return RiskDecomposition.from_parts(
        model.bstar * bias_shape,
        model.sigma2 * c_of_w(w) * variance_shape,
    )


def _iso_m(alpha: float, gamma: float, z: float) -> float:
    """Positive root of z*alpha*m^2 + (alpha + z - gamma*alpha)*m + 1 = 0.

    This is the fixed point specialized to H = delta_alpha; the stable
    quadratic branch avoids cancellation on both signs of b.
    """
    b = alpha + z - gamma * alpha
    disc = math.sqrt(b * b - 4.0 * z * alpha)
    if b >= 0:
        return (b + disc) / (-2.0 * z * alpha)
    return 2.0 / (disc - b)


def isotropic_ridge_risk(
    alpha: float, gamma: float, sigma2: float, bstar: float, w: float, lam: float
) -> RiskDecomposition:
    """Closed form for H = G = delta_alpha, bypassing the numeric fixed point."""
    if not (np.isfinite(alpha) and alpha > 0):
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if gamma <= 1:
        raise ValueError(f"gamma must exceed 1, got {gamma!r}")
    w = clamp_weight(w)
    lam = _check_lam(lam)
    m1 = _iso_m(alpha, gamma, -lam / w)
    m2 = _iso_m(alpha, gamma, -lam / (2.0 - w))
    variance_shape = (
        (w * (2.0 - w) / (2.0 * (1.0 - w)))
        * (gamma / lam)
        * (alpha / (1.0 + alpha * m1) - alpha / (1.0 + alpha * m2))
    )
    den = 1.0 - gamma * (alpha * m1) ** 2 / (1.0 + alpha * m1) ** 2
    bias_shape = (alpha / (1.0 + alpha * m1) ** 2) / den
    return RiskDecomposition.from_parts(
        bstar * bias_shape, sigma2 * c_of_w(w) * variance_shape
    )


def random_effects_risk(
    H: DiscreteMeasure, gamma: float, sigma2: float, bstar: float, w: float, lam: float
) -> RiskDecomposition:
    """Limit risk under exchangeable signal coordinates, built entirely from f.

    With G = H forced by the signal model, bias and variance reduce to
    divided differences of f(z) = 1/m(-z) - z:

        B = (f(z1) - z1 f'(z1)) / gamma,   V = (f(z1) - f(z2)) / (z1 - z2),

    z1 = lam/w, z2 = lam/(2-w).
    """
    if gamma <= 1:
        raise ValueError(f"gamma must exceed 1, got {gamma!r}")
    w = clamp_weight(w)
    lam = _check_lam(lam)
    z1 = lam / w
    z2 = lam / (2.0 - w)
    f1, fp1 = f_eval(z1, H, gamma)
    f2, _ = f_eval(z2, H, gamma)
    bias_shape = (f1 - z1 * fp1) / gamma
    variance_shape = (f1 - f2) / (z1 - z2)
    return RiskDecomposition.from_parts(
        bstar * bias_shape, sigma2 * c_of_w(w) * variance_shape
    )


def spiked_risk(
    s: float, theta: float, gamma: float, sigma2: float, bstar: float, w: float, lam: float
) -> RiskDecomposition:
    """Identity covariance plus one spike of size s, signal alignment theta.

    The spike has vanishing spectral weight, so the variance is the alpha = 1
    isotropic one; only the bias feels the alignment.
    """
    if not (np.isfinite(s) and s >= 0):
        raise ValueError(f"spike size must be nonnegative, got {s!r}")
    if not (np.isfinite(theta) and -1.0 <= theta <= 1.0):
        raise ValueError(f"alignment must lie in [-1, 1], got {theta!r}")
    if gamma <= 1:
        raise ValueError(f"gamma must exceed 1, got {gamma!r}")
    w = clamp_weight(w)
    lam = _check_lam(lam)
    m1 = _iso_m(1.0, gamma, -lam / w)
    m2 = _iso_m(1.0, gamma, -lam / (2.0 - w))
    variance_shape = (
        (w * (2.0 - w) / (2.0 * (1.0 - w)))
        * (gamma / lam)
        * (1.0 / (1.0 + m1) - 1.0 / (1.0 + m2))
    )
    t2 = theta * theta
    num = t2 * (1.0 + s) / (1.0 + m1 * (1.0 + s)) ** 2 + (1.0 - t2) / (1.0 + m1) ** 2
    den = 1.0 - gamma * m1**2 / (1.0 + m1) ** 2
    return RiskDecomposition.from_parts(
        bstar * num / den, sigma2 * c_of_w(w) * variance_shape
    )


def optimal_w(risk_fn) -> tuple[float, float]:
    """Golden-section minimizer of log risk over the clamped weight interval.

    risk_fn maps w to a total risk; log-convexity of the risk in w makes the
    section search globally correct.  Returns (w_star, risk at w_star).
    """

    def logrisk(w: float) -> float:
        r = risk_fn(w)
        if not (np.isfinite(r) and r > 0):
            raise ArithmeticError(f"risk evaluation failed at w = {w!r}: got {r!r}")
        return math.log(r)

    a, b = W_MIN, 1.0 - W_MIN
    h = b - a
    c = b - INV_PHI * h
    d = a + INV_PHI * h
    fc, fd = logrisk(c), logrisk(d)
    while h > GSS_TOL:
        if fc < fd:
            b, d, fd = d, c, fc
            h = b - a
            c = b - INV_PHI * h
            fc = logrisk(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + INV_PHI * h
            fd = logrisk(d)
    w_star = 0.5 * (a + b)
    return w_star, float(risk_fn(w_star))


def risk_family(kind: str, *, gamma, sigma2, bstar, alpha=1.0, H=None, s=5.0, theta=0.5):
    """Map a model-path name to a lam -> (w -> total risk) factory."""
    if kind == "isotropic":
        def fam(lam):
            return lambda w: isotropic_ridge_risk(alpha, gamma, sigma2, bstar, w, lam).total
    elif kind == "random-effects":
        if H is None:
            raise ValueError("random-effects path needs a spectral measure H")
        def fam(lam):
            return lambda w: random_effects_risk(H, gamma, sigma2, bstar, w, lam).total
    elif kind == "spiked":
        def fam(lam):
            return lambda w: spiked_risk(s, theta, gamma, sigma2, bstar, w, lam).total
    else:
        raise ValueError(f"unknown model path {kind!r}")
    return fam


def optimal_w_curve(family, lam_grid) -> list[tuple[float, float, float]]:
    """Rows (lam, w_star, risk at w_star) over a penalty grid.

    family is a lam -> (w -> total risk) factory, e.g. from risk_family.
    """
    rows = []
    for lam in np.asarray(lam_grid, dtype=float):
        w_star, risk = optimal_w(family(float(lam)))
        rows.append((float(lam), w_star, risk))
    return rows


def snr_monotonicity_check(kind: str, lam: float, snr_grid, *, gamma, **params):
    """w_star as a function of signal-to-noise at fixed lam.

    The pair (sigma2, bstar) = (1, snr) represents each grid point; only the
    ratio matters for the argmin.
    """
    rows = []
    for snr in np.asarray(snr_grid, dtype=float):
        fam = risk_family(kind, gamma=gamma, sigma2=1.0, bstar=float(snr), **params)
        w_star, _ = optimal_w(fam(float(lam)))
        rows.append((float(snr), w_star))
    return rows


def dynamic_weights(t_max: int) -> list[float]:
    """Per-iteration optimal weights w_t = (1 + w_{t-1}) / (2 + w_{t-1}), w_0 = 1.

    Computed in exact rational arithmetic; the sequence is a ratio of
    consecutive Fibonacci numbers and decreases to 1/phi.
    """
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    w = Fraction(1)
    out = [1.0]
    for _ in range(t_max):
        w = (1 + w) / (2 + w)
        out.append(float(w))
    return out
