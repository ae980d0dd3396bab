"""Finite-sample label-mixing iteration and its exact conditional risk.

The iteration refits on w * (fresh labels) + (1 - w) * (labels generated by
the previous iterate).  Conditional on the design, bias and variance of the
iterate have closed forms in the eigenbasis of X^T X; everything here is
evaluated through a singular value decomposition of X, never through
explicit matrix powers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .spectra import CovarianceFactors, DesignSample, Role, empirical_H, substream
from .stieltjes import df2, solve_m


@dataclass(frozen=True)
class IterationConfig:
    """Parameters of one iteration run; lam None selects the interpolator."""

    w: float
    t: int
    lam: float | None = None
    sigma2: float = 1.0
    noise_dist: str = "gaussian"
    seed: int = 0
    replicate: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.w) and 0.0 <= self.w <= 1.0):
            raise ValueError(f"mixing weight must lie in [0, 1], got {self.w!r}")
        if int(self.t) != self.t or self.t < 0:
            raise ValueError(f"t must be a nonnegative integer, got {self.t!r}")
        if self.lam is not None and not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be positive or None, got {self.lam!r}")
        if not (np.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2!r}")
        if self.noise_dist not in ("gaussian", "rademacher"):
            raise ValueError(f"unknown noise distribution {self.noise_dist!r}")


@dataclass(frozen=True)
class ConditionalRisk:
    bias: float
    variance: float
    total: float


class DesignOps:
    """SVD-backed solves for one design, shared across penalties and weights."""

    def __init__(self, X: np.ndarray):
        self.n, self.p = X.shape
        self.X = X
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
        cutoff = max(self.n, self.p) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        r = int(np.sum(s > cutoff))
        self.U = U[:, :r]
        self.s = s[:r]
        self.V = Vt[:r].T
        self.rank = r

    def gains(self, lam: float | None) -> np.ndarray:
        """Spectral gains of (X^T X + n lam I)^{-1} X^T, or of pinv(X)."""
        if lam is None:
            return 1.0 / self.s
        return self.s / (self.s**2 + self.n * lam)

    def apply_fit(self, y: np.ndarray, lam: float | None) -> np.ndarray:
        """Fit coefficients from labels; y may be a vector or a column batch."""
        coords = self.U.T @ y
        g = self.gains(lam)
        return self.V @ (coords * (g[:, None] if coords.ndim == 2 else g))

    def apply_fit_multi(self, Y: np.ndarray, lams: np.ndarray) -> np.ndarray:
        """Columnwise fits where column j uses penalty lams[j]."""
        coords = self.U.T @ Y
        g = self.s[:, None] / (self.s[:, None] ** 2 + self.n * lams[None, :])
        return self.V @ (g * coords)


def _noise(rng: np.random.Generator, dist: str, size, scale: float) -> np.ndarray:
    if dist == "gaussian":
        return rng.normal(0.0, scale, size)
    return scale * (rng.integers(0, 2, size=size).astype(float) * 2.0 - 1.0)


def _run_path(design: DesignSample, beta, cfg: IterationConfig, lam, key_log):
    ops = DesignOps(design.X)
    if lam is None and ops.rank < min(design.n, design.p) - 5:
        warnings.warn(
            f"design rank {ops.rank} is far below min(n, p) = {min(design.n, design.p)}; "
            "likely numerical failure",
            RuntimeWarning,
        )
    beta = np.asarray(beta, dtype=float)
    scale = float(np.sqrt(cfg.sigma2))
    clean = design.X @ beta

    def eps(role: Role, step: int) -> np.ndarray:
        if key_log is not None:
            key_log.append((int(role), cfg.replicate, step))
        rng = substream(cfg.seed, role, cfg.replicate, step)
        return _noise(rng, cfg.noise_dist, design.n, scale)

    bhat = ops.apply_fit(clean + eps(Role.NOISE_REAL, 0), lam)
    for step in range(1, cfg.t + 1):
        y_real = clean + eps(Role.NOISE_REAL, step)
        y_synth = design.X @ bhat + eps(Role.NOISE_SYNTH, step)
        bhat = ops.apply_fit(cfg.w * y_real + (1.0 - cfg.w) * y_synth, lam)
    return bhat


def ridge_path(design: DesignSample, beta, config: IterationConfig,
               key_log: list | None = None) -> np.ndarray:
    """Run t rounds of the mixed-label ridge iteration; returns the iterate."""
    if config.lam is None:
        raise ValueError("ridge path needs lam > 0; use interpolator_path otherwise")
    return _run_path(design, beta, config, config.lam, key_log)


def interpolator_path(design: DesignSample, beta, config: IterationConfig,
                      key_log: list | None = None) -> np.ndarray:
    """Minimum-norm interpolation variant; requires p > n."""
    if config.lam is not None:
        raise ValueError("interpolator path takes no penalty; use ridge_path")
    if design.p <= design.n:
        raise ValueError(f"interpolation needs p > n, got p={design.p}, n={design.n}")
    return _run_path(design, beta, config, None, key_log)


def _sigma_quadratics(sigma: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Diagonal of V^T Sigma V without forming the product."""
    return np.einsum("ij,ij->j", V, sigma @ V)


def _require_ridge(config: IterationConfig) -> float:
    if config.lam is None:
        raise ValueError("conditional ridge risk needs lam > 0")
    if config.w <= 0:
        raise ValueError("conditional ridge risk needs w > 0")
    return float(config.lam)


def conditional_ridge_risk(design: DesignSample, sigma: np.ndarray, beta,
                           config: IterationConfig) -> ConditionalRisk:
    """Exact bias and variance of the ridge iterate conditional on X.

    Both are geometric sums over the spectrum of X^T X.  The variance ratio
    r = (1-w)^2 d^2/(d + n lam)^2 can sit within an ulp of 1, so the sums use
    r - 1 = -((w d + n lam)((2-w) d + n lam))/(d + n lam)^2, which is exact,
    together with expm1/log1p.
    """
    lam = _require_ridge(config)
    ops = DesignOps(design.X)
    beta = np.asarray(beta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    w, t, n = config.w, int(config.t), design.n
    wt = 1.0 - w
    d = ops.s**2
    nlam = n * lam

    rm1 = -((w * d + nlam) * ((2.0 - w) * d + nlam)) / (d + nlam) ** 2
    base = d / (d + nlam) ** 2
    if t == 0:
        coef = base
    else:
        with np.errstate(divide="ignore"):
            log_r = np.log1p(rm1)
        geom = np.expm1(t * log_r) / rm1
        r_pow = np.exp(t * log_r)
        coef = base * ((w * w + wt * wt) * geom + r_pow)
    quad = _sigma_quadratics(sigma, ops.V)
    variance = config.sigma2 * float(coef @ quad)

    ratio = nlam / w
    coords = ops.V.T @ beta
    decay = (wt * d / (d + nlam)) ** (t + 1)
    shrink = (ratio / (d + ratio)) * (1.0 - decay)
    vec = ops.V @ (shrink * coords) + (beta - ops.V @ coords)
    bias = float(vec @ (sigma @ vec))
    return ConditionalRisk(bias=bias, variance=variance, total=bias + variance)


def variance_monotonicity_factor(w: float, t_max: int) -> np.ndarray:
    """Interpolator variance multipliers for t = 0..t_max.

    Successive differences have the sign of (3w - 1)(w - 1): decreasing for
    w in (1/3, 1), increasing below 1/3, flat at the endpoints.
    """
    if not (0.0 <= w <= 1.0):
        raise ValueError(f"mixing weight must lie in [0, 1], got {w!r}")
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    wt = 1.0 - w
    mixed = w * w + wt * wt
    factors = [1.0]
    acc = 0.0
    for t in range(1, t_max + 1):
        acc += wt ** (2 * (t - 1))
        factors.append(mixed * acc + wt ** (2 * t))
    return np.array(factors)


def conditional_interpolator_risk(design: DesignSample, sigma: np.ndarray, beta,
                                  config: IterationConfig) -> ConditionalRisk:
    """Exact conditional risk of the interpolation iterate.

    The variance is a t-dependent multiple of tr[(X^T X)^+ Sigma]; the bias
    is the energy of beta outside the row space and depends on neither w
    nor t.
    """
    if config.lam is not None:
        raise ValueError("interpolator risk takes no penalty")
    if design.p <= design.n:
        raise ValueError(f"interpolation needs p > n, got p={design.p}, n={design.n}")
    ops = DesignOps(design.X)
    beta = np.asarray(beta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    factor = variance_monotonicity_factor(config.w, int(config.t))[-1]
    quad = _sigma_quadratics(sigma, ops.V)
    variance = config.sigma2 * factor * float(np.sum(quad / ops.s**2))
    coords = ops.V.T @ beta
    perp = beta - ops.V @ coords
    bias = float(perp @ (sigma @ perp))
    return ConditionalRisk(bias=bias, variance=variance, total=bias + variance)


def empirical_risk(estimators, beta, sigma: np.ndarray) -> tuple[float, float]:
    """Mean and standard error of ||bhat - beta||_Sigma^2 over replicates."""
    B = np.asarray(estimators, dtype=float)
    if B.ndim != 2 or B.shape[0] < 1:
        raise ValueError("estimators must be a nonempty (reps, p) array")
    diff = B - np.asarray(beta, dtype=float)[None, :]
    risks = np.einsum("ri,ri->r", diff, diff @ np.asarray(sigma, dtype=float))
    mean = float(risks.mean())
    if risks.size < 2:
        return mean, float("nan")
    return mean, float(risks.std(ddof=1) / np.sqrt(risks.size))


def det_equiv_check(C, design: DesignSample, cov: CovarianceFactors, z: float):
    """Deterministic-equivalent diagnostic for the resolvent quadratic form.

    Compares z^2 tr[C Q(z) Sigma Q(z)] with Q(z) = (X^T X / n - z I)^{-1}
    against tr[C (I + m(z) Sigma)^{-2} Sigma] / (1 - df2(1/m)/n).  C may be
    a vector v, standing for v v^T.  Returns (lhs, rhs, relative gap).
    """
    z = float(z)
    if z >= 0:
        raise ValueError(f"z must be negative, got {z!r}")
    ops = DesignOps(design.X)
    n, p = design.n, design.p
    sigma = cov.sigma

    def q_apply(vec):
        coords = ops.V.T @ vec
        denom = ops.s**2 / n - z
        inside = coords / (denom[:, None] if coords.ndim == 2 else denom)
        return ops.V @ inside + (vec - ops.V @ coords) / (-z)

    C = np.asarray(C, dtype=float)
    vals, vecs = cov.eigenvalues, cov.eigenvectors
    m = solve_m(z, empirical_H(vals), p / n).m
    if C.ndim == 1:
        q = q_apply(C)
        lhs = z * z * float(q @ (sigma @ q))
        proj = (vecs.T @ C) ** 2
    elif C.ndim == 2:
        # q_apply(C) is Q C, so the trace of Q Sigma Q C is already tr[C Q Sigma Q]
        inner = q_apply(sigma @ q_apply(C))
        lhs = z * z * float(np.trace(inner))
        proj = np.einsum("ij,ij->j", vecs, C @ vecs)
    else:
        raise ValueError("C must be a vector or a square matrix")
    rhs = float(np.sum(proj * vals / (1.0 + m * vals) ** 2))
    rhs /= 1.0 - df2(1.0 / m, vals) / n
    gap = abs(lhs - rhs) / abs(rhs)
    return lhs, rhs, gap
