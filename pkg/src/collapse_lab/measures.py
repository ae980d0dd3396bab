"""Discrete spectral measures: finite mixtures of point masses on [0, inf)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MERGE_TOL = 1e-9
WEIGHT_SUM_TOL = 1e-12


class MeasureError(ValueError):
    """Raised when atoms do not form a probability measure on [0, inf)."""


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure sum_k weights[k] * delta(locations[k]).

    Atoms are canonicalized on construction: locations sorted ascending and
    locations within MERGE_TOL of their left neighbour merged, weights summed.
    A merged cluster keeps its smallest location as representative.
    """

    locations: np.ndarray
    weights: np.ndarray

    def __init__(self, locations, weights):
        locs = np.atleast_1d(np.asarray(locations, dtype=float))
        wts = np.atleast_1d(np.asarray(weights, dtype=float))
        if locs.ndim != 1 or locs.shape != wts.shape or locs.size == 0:
            raise MeasureError("locations and weights must be matching nonempty 1-d arrays")
        if not (np.all(np.isfinite(locs)) and np.all(np.isfinite(wts))):
            raise MeasureError("atoms must be finite")
        if np.any(locs < 0):
            raise MeasureError(f"negative location {locs.min():g}")
        if np.any(wts < -WEIGHT_SUM_TOL):
            raise MeasureError(f"negative weight {wts.min():g}")
        total = float(wts.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise MeasureError(f"weights sum to {total!r}, not 1")

        order = np.argsort(locs, kind="stable")
        locs, wts = locs[order], wts[order]
        keep_loc = [locs[0]]
        keep_wt = [wts[0]]
        for x, w in zip(locs[1:], wts[1:]):
            if x - keep_loc[-1] <= MERGE_TOL:
                keep_wt[-1] += w
            else:
                keep_loc.append(x)
                keep_wt.append(w)
        loc_arr = np.array(keep_loc)
        wt_arr = np.maximum(np.array(keep_wt), 0.0)
        loc_arr.setflags(write=False)
        wt_arr.setflags(write=False)
        object.__setattr__(self, "locations", loc_arr)
        object.__setattr__(self, "weights", wt_arr)

    @staticmethod
    def dirac(location: float) -> "DiscreteMeasure":
        return DiscreteMeasure([location], [1.0])

    @property
    def natoms(self) -> int:
        return self.locations.size

    def mean(self) -> float:
        return float(self.locations @ self.weights)

    def integrate(self, fn) -> float:
        """Integral of fn against the measure; fn must accept an ndarray."""
        return float(np.sum(self.weights * fn(self.locations)))

    def cdf(self, x):
        """Right-continuous distribution function, vectorized in x."""
        x = np.asarray(x, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        return cum[np.searchsorted(self.locations, x, side="right")]

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.locations.shape == other.locations.shape
            and bool(np.all(self.locations == other.locations))
            and bool(np.all(self.weights == other.weights))
        )

    def __repr__(self):
        atoms = ", ".join(
            f"{x:g}:{w:g}" for x, w in zip(self.locations, self.weights)
        )
        return f"DiscreteMeasure({atoms})"


def kolmogorov_distance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """sup_x |F_mu(x) - F_nu(x)|.

    For discrete measures the supremum is attained at an atom of one of the
    two measures, so evaluating both CDFs on the merged atom set is exact.
    """
    grid = np.union1d(mu.locations, nu.locations)
    return float(np.max(np.abs(mu.cdf(grid) - nu.cdf(grid))))
