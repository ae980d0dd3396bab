"""Covariance and signal ensembles, design draws, and empirical spectra."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache

import numpy as np

from .measures import DiscreteMeasure, MeasureError

EIG_CLAMP = 1e-8  # eigenvalues of a nominally PSD matrix may dip this far below zero


class Role(IntEnum):
    """Substream roles.

    Every random draw comes from substream(seed, role, replicate, step).
    The derivation is a pure function of the key, so any execution order,
    serial or threaded, sees identical draws, and fresh noise at each
    iteration is fresh by construction.
    """

    DESIGN = 0
    SIGNAL = 1
    NOISE_REAL = 2
    NOISE_SYNTH = 3


def substream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


# --------------------------------------------------------------------------
# covariance models


@dataclass(frozen=True)
class Isotropic:
    alpha: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")


@dataclass(frozen=True)
class AR1:
    rho: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.rho) and abs(self.rho) < 1):
            raise ValueError(f"AR1 correlation must satisfy |rho| < 1, got {self.rho!r}")


@dataclass(frozen=True)
class Spiked:
    """Identity plus a rank-one spike s * v v^T; direction None means e_1."""

    s: float = 5.0
    direction: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (np.isfinite(self.s) and self.s >= 0):
            raise ValueError(f"spike size must be nonnegative, got {self.s!r}")
        if self.direction is not None:
            v = np.asarray(self.direction, dtype=float)
            if v.ndim != 1 or not np.all(np.isfinite(v)):
                raise ValueError("spike direction must be a finite vector")
            if abs(v @ v - 1.0) > 1e-8:
                raise ValueError("spike direction must have unit norm")


@dataclass(frozen=True)
class Equicorrelated:
    """(1 - rho/sqrt(p)) I + (rho/sqrt(p)) 1 1^T.

    The top eigenvalue grows like rho*sqrt(p), so the bounded-spectrum
    assumption behind the limit formulas fails; factors built from this
    model carry assumption_violating=True.
    """

    rho: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.rho) and self.rho >= 0):
            raise ValueError(f"rho must be nonnegative, got {self.rho!r}")


@dataclass
class ExplicitMatrix:
    matrix: np.ndarray


CovarianceModel = Isotropic | AR1 | Spiked | Equicorrelated | ExplicitMatrix


@dataclass(frozen=True, eq=False)
class CovarianceFactors:
    """Covariance with its eigendecomposition and symmetric PSD square root."""

    sigma: np.ndarray
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns, matching eigenvalue order
    sqrt_sigma: np.ndarray
    assumption_violating: bool = False


def _spike_direction(model: Spiked, p: int) -> np.ndarray:
    if model.direction is None:
        v = np.zeros(p)
        v[0] = 1.0
        return v
    v = np.asarray(model.direction, dtype=float)
    if v.size != p:
        raise ValueError(f"spike direction has length {v.size}, expected {p}")
    return v


def _factor_dense(sigma: np.ndarray, violating: bool) -> CovarianceFactors:
    vals, vecs = np.linalg.eigh(sigma)
    worst = float(vals.min())
    if worst < -EIG_CLAMP * max(1.0, float(vals.max())):
        raise ValueError(f"covariance is not PSD: most negative eigenvalue {worst:g}")
    vals = np.maximum(vals, 0.0)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    root = 0.5 * (root + root.T)
    for arr in (sigma, vals, vecs, root):
        arr.setflags(write=False)
    return CovarianceFactors(
        sigma=sigma,
        eigenvalues=vals,
        eigenvectors=vecs,
        sqrt_sigma=root,
        assumption_violating=violating,
    )


@lru_cache(maxsize=32)
def _build_parametric(model, p: int) -> CovarianceFactors:
    if isinstance(model, Isotropic):
        eye = np.eye(p)
        sigma = model.alpha * eye
        vals = np.full(p, model.alpha)
        root = np.sqrt(model.alpha) * eye
        for arr in (sigma, vals, eye, root):
            arr.setflags(write=False)
        return CovarianceFactors(sigma, vals, eye, root)
    if isinstance(model, AR1):
        idx = np.arange(p)
        sigma = model.rho ** np.abs(idx[:, None] - idx[None, :])
        return _factor_dense(sigma, False)
    if isinstance(model, Spiked):
        v = _spike_direction(model, p)
        sigma = np.eye(p) + model.s * np.outer(v, v)
        return _factor_dense(sigma, False)
    if isinstance(model, Equicorrelated):
        off = model.rho / np.sqrt(p)
        if off > 1.0:
            raise ValueError(f"rho = {model.rho:g} exceeds sqrt(p), diagonal would be negative")
        sigma = np.full((p, p), off) + (1.0 - off) * np.eye(p)
        return _factor_dense(sigma, True)
    raise TypeError(f"unknown covariance model {model!r}")


def build_covariance(model: CovarianceModel, p: int) -> CovarianceFactors:
    """Materialize Sigma with eigendecomposition and symmetric root at size p.

    Parametric families are memoized; repeated draws at the same size reuse
    one factorization.
    """
    p = int(p)
    if p < 1:
        raise ValueError(f"p must be positive, got {p}")
    if isinstance(model, ExplicitMatrix):
        sigma = np.asarray(model.matrix, dtype=float)
        if sigma.shape != (p, p):
            raise ValueError(f"explicit covariance has shape {sigma.shape}, expected {(p, p)}")
        if not np.all(np.isfinite(sigma)):
            raise ValueError("explicit covariance must be finite")
        if np.max(np.abs(sigma - sigma.T)) > 1e-8 * max(1.0, float(np.max(np.abs(sigma)))):
            raise ValueError("explicit covariance must be symmetric")
        return _factor_dense(0.5 * (sigma + sigma.T), False)
    return _build_parametric(model, p)


def empirical_H(eigenvalues) -> DiscreteMeasure:
    """Spectral law: equal weight 1/p on each eigenvalue."""
    vals = np.asarray(eigenvalues, dtype=float)
    if np.any(vals < -EIG_CLAMP):
        raise MeasureError(f"negative eigenvalue {vals.min():g}")
    vals = np.maximum(vals, 0.0)
    return DiscreteMeasure(vals, np.full(vals.size, 1.0 / vals.size))


def empirical_G(eigenvalues, eigenvectors, beta) -> DiscreteMeasure:
    """Signal-weighted spectral law: weight <v_k, beta>^2 / ||beta||^2 at s_k.

    Weights are normalized by their own sum (identical to ||beta||^2 up to
    roundoff), so they add to one exactly and the measure is invariant under
    beta -> c*beta.
    """
    vals = np.asarray(eigenvalues, dtype=float)
    beta = np.asarray(beta, dtype=float)
    coords = np.asarray(eigenvectors, dtype=float).T @ beta
    wts = coords**2
    total = wts.sum()
    if total <= 0:
        raise MeasureError("signal vector is zero")
    if np.any(vals < -EIG_CLAMP):
        raise MeasureError(f"negative eigenvalue {vals.min():g}")
    return DiscreteMeasure(np.maximum(vals, 0.0), wts / total)


# --------------------------------------------------------------------------
# signal models


@dataclass(frozen=True)
class NormalizedBernoulli:
    """beta = btilde / ||btilde|| with btilde_i iid Bernoulli(q)."""

    q: float = 0.1

    def __post_init__(self):
        if not (np.isfinite(self.q) and 0 < self.q < 1):
            raise ValueError(f"q must lie in (0, 1), got {self.q!r}")


@dataclass(frozen=True)
class RandomEffects:
    """beta_i iid N(0, bstar/p); exchangeable coordinates, E||beta||^2 = bstar."""

    bstar: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.bstar) and self.bstar > 0):
            raise ValueError(f"bstar must be positive, got {self.bstar!r}")


@dataclass(frozen=True)
class SpikedAligned:
    """Unit signal with component theta along the spike direction.

    The orthogonal part is a normalized Bernoulli(q) draw projected off the
    spike, matching the spiked covariance simulations.
    """

    theta: float = 0.5
    direction: tuple[float, ...] | None = None
    q: float = 0.25

    def __post_init__(self):
        if not (np.isfinite(self.theta) and -1.0 <= self.theta <= 1.0):
            raise ValueError(f"theta must lie in [-1, 1], got {self.theta!r}")
        if not (np.isfinite(self.q) and 0 < self.q < 1):
            raise ValueError(f"q must lie in (0, 1), got {self.q!r}")


@dataclass
class ExplicitVector:
    vector: np.ndarray


SignalModel = NormalizedBernoulli | RandomEffects | SpikedAligned | ExplicitVector

_MAX_SIGNAL_ATTEMPTS = 100


def _bernoulli_nonzero(q: float, size: int, seed: int, replicate: int, attempts_log):
    for attempt in range(_MAX_SIGNAL_ATTEMPTS):
        rng = substream(seed, Role.SIGNAL, replicate, attempt)
        draw = (rng.random(size) < q).astype(float)
        if attempts_log is not None:
            attempts_log.append(attempt)
        if draw.any():
            return draw
    raise RuntimeError(
        f"signal draw produced the zero vector {_MAX_SIGNAL_ATTEMPTS} times "
        f"(q={q:g}, p={size})"
    )


def draw_signal(model: SignalModel, p: int, seed: int = 0, replicate: int = 0,
                attempts_log: list | None = None) -> np.ndarray:
    """Draw the true coefficient vector for one experiment or replicate.

    Zero Bernoulli draws are retried on an incremented substream; the
    attempt indices used are appended to attempts_log when given.
    """
    p = int(p)
    if p < 1:
        raise ValueError(f"p must be positive, got {p}")
    if isinstance(model, NormalizedBernoulli):
        draw = _bernoulli_nonzero(model.q, p, seed, replicate, attempts_log)
        return draw / np.linalg.norm(draw)
    if isinstance(model, RandomEffects):
        rng = substream(seed, Role.SIGNAL, replicate, 0)
        return rng.normal(0.0, np.sqrt(model.bstar / p), p)
    if isinstance(model, SpikedAligned):
        if model.direction is None:
            v = np.zeros(p)
            v[0] = 1.0
        else:
            v = np.asarray(model.direction, dtype=float)
            if v.size != p:
                raise ValueError(f"direction has length {v.size}, expected {p}")
        if abs(model.theta) == 1.0:
            return model.theta * v
        draw = _bernoulli_nonzero(model.q, p, seed, replicate, attempts_log)
        perp = draw - (draw @ v) * v
        norm = np.linalg.norm(perp)
        if norm <= 1e-12:
            raise RuntimeError("signal draw is parallel to the spike; cannot orthogonalize")
        return model.theta * v + np.sqrt(1.0 - model.theta**2) * (perp / norm)
    if isinstance(model, ExplicitVector):
        beta = np.asarray(model.vector, dtype=float)
        if beta.size != p or not np.all(np.isfinite(beta)) or not beta.any():
            raise ValueError("explicit signal must be a finite nonzero vector of length p")
        return beta.copy()
    raise TypeError(f"unknown signal model {model!r}")


# --------------------------------------------------------------------------
# designs


@dataclass(frozen=True, eq=False)
class DesignSample:
    """One realized design X = Z sqrt(Sigma) together with its provenance."""

    X: np.ndarray
    sqrt_sigma: np.ndarray
    n: int
    p: int
    entry_dist: str
    seed: int
    replicate: int


def draw_design(model: CovarianceModel, n: int, p: int, entry_dist: str = "gaussian",
                seed: int = 0, replicate: int = 0) -> DesignSample:
    """Draw X with iid rows of covariance Sigma.

    Entries of Z are standard gaussian or rademacher; X = Z sqrt(Sigma) with
    the symmetric root.  Isotropic models scale Z directly, which for
    alpha = 1 leaves X identical to Z.
    """
    n, p = int(n), int(p)
    if n < 1 or p < 1:
        raise ValueError(f"design shape must be positive, got ({n}, {p})")
    rng = substream(seed, Role.DESIGN, replicate)
    if entry_dist == "gaussian":
        Z = rng.standard_normal((n, p))
    elif entry_dist == "rademacher":
        Z = rng.integers(0, 2, size=(n, p)).astype(float) * 2.0 - 1.0
    else:
        raise ValueError(f"unknown entry distribution {entry_dist!r}")
    cov = build_covariance(model, p)
    if isinstance(model, Isotropic):
        X = Z if model.alpha == 1.0 else np.sqrt(model.alpha) * Z
    else:
        X = Z @ cov.sqrt_sigma
    return DesignSample(
        X=X,
        sqrt_sigma=cov.sqrt_sigma,
        n=n,
        p=p,
        entry_dist=entry_dist,
        seed=int(seed),
        replicate=int(replicate),
    )
