"""Fit-quality and clustering-accuracy metrics: Rand index, MAE, LPML."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geo_ingest import GridCounts, PointPattern, cell_index
from .gibbs import PosteriorDraws
from .mfm_model import NumericalError


def _pair_count(x):
    x = np.asarray(x, dtype=np.int64)
    return int(np.sum(x * (x - 1) // 2))


def rand_index(z1, z2) -> float:
    """Fraction of item pairs on which two labelings agree.

    Works from the contingency table, so it is O(n + r s) rather than O(n^2).
    """
    z1 = np.asarray(z1).reshape(-1)
    z2 = np.asarray(z2).reshape(-1)
    if z1.size != z2.size:
        raise ValueError(f"label vectors differ in length ({z1.size} vs {z2.size})")
    n = z1.size
    if n < 2:
        raise ValueError("need at least two items")
    _, a = np.unique(z1, return_inverse=True)
    _, b = np.unique(z2, return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    same_both = _pair_count(table)
    same_1 = _pair_count(table.sum(axis=1))
    same_2 = _pair_count(table.sum(axis=0))
    total = n * (n - 1) // 2
    diff_both = total - same_1 - same_2 + same_both
    return (same_both + diff_both) / total


def mae(estimated, counts) -> float:
    est = np.asarray(estimated, dtype=np.float64).reshape(-1)
    obs = counts.counts if isinstance(counts, GridCounts) else np.asarray(counts)
    obs = np.asarray(obs, dtype=np.float64).reshape(-1)
    if est.size != obs.size:
        raise ValueError(f"estimate has {est.size} cells, counts have {obs.size}")
    return float(np.mean(np.abs(est - obs)))


@dataclass
class LpmlResult:
    lpml: float
    log_density: np.ndarray  # log of the harmonic-mean point intensity, per point
    integral: float  # integral of the posterior-mean intensity over the unit square
    cpo: np.ndarray  # per-point log CPO share

    @property
    def n_points(self) -> int:
        return int(self.log_density.size)


def _cell_harmonic_and_mean(draws: PosteriorDraws, chunk: int = 512):
    inv_sum = np.zeros(draws.n)
    lam_sum = np.zeros(draws.n)
    for start in range(0, draws.n_draws, chunk):
        lam = draws.cell_intensities(start, start + chunk)
        if np.any(~(lam > 0)):
            raise NumericalError("a draw has a nonpositive cell intensity; LPML undefined")
        inv_sum += (1.0 / lam).sum(axis=0)
        lam_sum += lam.sum(axis=0)
    B = draws.n_draws
    return B / inv_sum, lam_sum / B


def lpml(points: PointPattern | None, draws: PosteriorDraws, grid: GridCounts) -> LpmlResult:
    """Monte Carlo LPML for the piecewise-constant intensity surface.

    The point intensity in cell i under draw b is lambda_{z_i}^(b) / cell_area.
    Each point contributes the log of the harmonic mean of that quantity over
    draws; the integral of the mean surface is the sum of the mean cell
    intensities.  With ``points=None`` the points are taken to be the grid
    counts (every point of a cell contributes identically).
    """
    if draws.n != grid.n or draws.resolution != grid.resolution:
        raise ValueError(
            f"draws were fitted at resolution {draws.resolution}, grid has {grid.resolution}"
        )
    if points is None:
        cells = np.repeat(np.arange(grid.n), grid.counts)
    else:
        cells = cell_index(points.points, grid.resolution)
        if not np.array_equal(np.bincount(cells, minlength=grid.n), grid.counts):
            raise ValueError("points do not bin to the supplied grid counts")
    harmonic, mean = _cell_harmonic_and_mean(draws)
    log_cell_density = np.log(harmonic / grid.cell_area)
    log_density = log_cell_density[cells]
    integral = float(mean.sum())
    total = float(log_density.sum()) - integral
    share = integral / cells.size if cells.size else 0.0
    return LpmlResult(total, log_density, integral, log_density - share)


@dataclass
class MetricsReport:
    mae: float
    lpml: float
    rand_index: float | None = None
    mae_dahl: float | None = None
    per_point_cpo: np.ndarray | None = None
    resolution: int | None = None

    def to_dict(self, include_cpo: bool = False) -> dict:
        d = {"mae": self.mae, "lpml": self.lpml}
        for key in ("rand_index", "mae_dahl", "resolution"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        if include_cpo and self.per_point_cpo is not None:
            d["per_point_cpo"] = [float(x) for x in self.per_point_cpo]
        return d

    def to_json(self, include_cpo: bool = False) -> str:
        return json.dumps(self.to_dict(include_cpo), indent=1, sort_keys=True) + "\n"
