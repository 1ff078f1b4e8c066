"""Posterior summaries: co-clustering matrix, Dahl's least-squares draw,
posterior-mean intensity surface and the posterior of the cluster count.

The co-clustering matrix is held as exact integer counts C(i, j) (number of
draws in which i and j share a cluster) in a packed upper triangle, so the
Dahl distances can be compared exactly.  Both the accumulation and the
distance pass skip the largest cluster of each draw: with L that cluster and
S the remaining cells,

    1[i,j in L] = 1 - 1[i in S] - 1[j in S] + 1[i in S] 1[j in S],

so only pairs inside S need to be visited.  On maps where most cells sit in
one near-empty cluster this turns O(n^2) work per draw into O(|S|^2).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numba
import numpy as np

from .gibbs import PosteriorDraws

DEFAULT_DAHL_CAP = 4096


class CapabilityError(RuntimeError):
    """The requested summary would exceed the configured size limit."""


@numba.njit(cache=True)
def _packed_index(i, j, n):
    # i <= j
    return i * n - (i * (i - 1)) // 2 + (j - i)


@numba.njit(cache=True)
def _largest_cluster(z, k):
    sizes = np.zeros(k, dtype=np.int64)
    for i in range(z.size):
        sizes[z[i]] += 1
    best = 0
    for c in range(1, k):
        if sizes[c] > sizes[best]:
            best = c
    return best


@numba.njit(cache=True)
def _accumulate(z_all, k_all, n):
    m_draws = z_all.shape[0]
    acc = np.zeros(n * (n + 1) // 2, dtype=np.int32)
    outside = np.zeros(n, dtype=np.int64)
    rest = np.empty(n, dtype=np.int64)
    for m in range(m_draws):
        z = z_all[m]
        big = _largest_cluster(z, k_all[m])
        ns = 0
        for i in range(n):
            if z[i] != big:
                rest[ns] = i
                ns += 1
                outside[i] += 1
        for p in range(ns):
            i = rest[p]
            zi = z[i]
            base = i * n - (i * (i - 1)) // 2 - i
            for q in range(p, ns):
                j = rest[q]
                acc[base + j] += 2 if z[j] == zi else 1
    # C(i, j) = M - u_i - u_j + acc(i, j)
    for i in range(n):
        base = i * n - (i * (i - 1)) // 2 - i
        for j in range(i, n):
            acc[base + j] += m_draws - outside[i] - outside[j]
    return acc


@numba.njit(cache=True)
def _row_sums(packed, n):
    rows = np.zeros(n, dtype=np.int64)
    for i in range(n):
        base = i * n - (i * (i - 1)) // 2 - i
        rows[i] += packed[base + i]
        for j in range(i + 1, n):
            v = packed[base + j]
            rows[i] += v
            rows[j] += v
    return rows


@numba.njit(cache=True)
def _full_sum_squares(packed, n):
    total = 0
    for i in range(n):
        base = i * n - (i * (i - 1)) // 2 - i
        total += np.int64(packed[base + i]) ** 2
        for j in range(i + 1, n):
            total += 2 * np.int64(packed[base + j]) ** 2
    return total


@numba.njit(cache=True)
def _coclustered_mass(z_all, k_all, packed, rows, total, n):
    """X_m = sum over ordered pairs (i, j) co-clustered in draw m of C(i, j),
    and P_m = number of such pairs (sum of squared cluster sizes)."""
    m_draws = z_all.shape[0]
    mass = np.zeros(m_draws, dtype=np.int64)
    pairs = np.zeros(m_draws, dtype=np.int64)
    rest = np.empty(n, dtype=np.int64)
    for m in range(m_draws):
        z = z_all[m]
        k = k_all[m]
        big = _largest_cluster(z, k)
        sizes = np.zeros(k, dtype=np.int64)
        ns = 0
        row_out = 0
        for i in range(n):
            sizes[z[i]] += 1
            if z[i] != big:
                rest[ns] = i
                ns += 1
                row_out += rows[i]
        inner = 0  # sum over ordered pairs in S of C(i,j) * (1 + same cluster)
        for p in range(ns):
            i = rest[p]
            zi = z[i]
            base = i * n - (i * (i - 1)) // 2 - i
            inner += 2 * packed[base + i]
            for q in range(p + 1, ns):
                j = rest[q]
                w = 2 if z[j] == zi else 1
                inner += 2 * w * packed[base + j]
        mass[m] = total - 2 * row_out + inner
        sq = 0
        for c in range(k):
            sq += sizes[c] * sizes[c]
        pairs[m] = sq
    return mass, pairs


@dataclass
class Coclustering:
    """Packed upper-triangular co-clustering counts over ``n_draws`` draws."""

    n: int
    n_draws: int
    counts: np.ndarray  # int32, length n(n+1)/2
    draw_index: np.ndarray = field(default=None)  # which draws were used

    def index(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        return int(_packed_index(i, j, self.n))

    def __getitem__(self, ij) -> float:
        i, j = ij
        return self.counts[self.index(i, j)] / self.n_draws

    def mean_packed(self) -> np.ndarray:
        return self.counts / self.n_draws

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        iu = np.triu_indices(self.n)
        out[iu] = self.mean_packed()
        out.T[iu] = out[iu]
        return out


def coclustering_mean(draws: PosteriorDraws, max_cells: int = DEFAULT_DAHL_CAP,
                      thin: int = 1) -> Coclustering:
    """Average membership matrix of the draws (every ``thin``-th draw)."""
    n = draws.n
    if draws.n_draws < 1:
        raise ValueError("need at least one draw")
    if n > max_cells:
        raise CapabilityError(
            f"co-clustering matrix for n={n} cells exceeds the cap of {max_cells}; "
            "lower the resolution, thin the draws, or raise the cap"
        )
    idx = np.arange(0, draws.n_draws, thin)
    z = np.ascontiguousarray(draws.z[idx], dtype=np.int64)
    packed = _accumulate(z, np.ascontiguousarray(draws.k[idx]), n)
    return Coclustering(n=n, n_draws=idx.size, counts=packed, draw_index=idx)


@dataclass
class DahlResult:
    index: int  # position in the draws
    z: np.ndarray
    lambdas: np.ndarray
    distance: float


def _draw_scores(draws: PosteriorDraws, cocl: Coclustering):
    idx = cocl.draw_index if cocl.draw_index is not None else np.arange(draws.n_draws)
    rows = _row_sums(cocl.counts, cocl.n)
    z = np.ascontiguousarray(draws.z[idx], dtype=np.int64)
    mass, pairs = _coclustered_mass(z, np.ascontiguousarray(draws.k[idx]), cocl.counts, rows,
                                    int(rows.sum()), cocl.n)
    return idx, mass, pairs


def _distances(cocl: Coclustering, mass, pairs) -> np.ndarray:
    M = cocl.n_draws
    sq_total = float(_full_sum_squares(cocl.counts, cocl.n))
    # sum_ij (B - Bbar)^2 = P - 2 X / M + sum_ij C^2 / M^2
    return pairs - 2.0 * mass / M + sq_total / M**2


def dahl_distances(draws: PosteriorDraws, cocl: Coclustering) -> np.ndarray:
    """Squared Frobenius distance of each considered draw's membership matrix to B-bar."""
    _, mass, pairs = _draw_scores(draws, cocl)
    return _distances(cocl, mass, pairs)


def dahl_select(draws: PosteriorDraws, cocl: Coclustering) -> DahlResult:
    """Draw whose membership matrix is closest in least squares to B-bar.

    The argmin is taken on the exact integer score M * P - 2 X; ties go to the
    earliest draw.
    """
    idx, mass, pairs = _draw_scores(draws, cocl)
    M = cocl.n_draws
    score = [M * int(p) - 2 * int(x) for p, x in zip(pairs, mass)]
    best = min(range(len(score)), key=lambda j: (score[j], j))
    m = int(idx[best])
    zm, lam = draws.draw(m)
    dist = float(_distances(cocl, mass[best:best + 1], pairs[best:best + 1])[0])
    return DahlResult(m, zm.astype(np.int64), lam.copy(), dist)


def posterior_mean_intensity(draws: PosteriorDraws, chunk: int = 512) -> np.ndarray:
    """Per-cell posterior mean of lambda_{z_i} (expected count per cell)."""
    total = np.zeros(draws.n)
    for start in range(0, draws.n_draws, chunk):
        total += draws.cell_intensities(start, start + chunk).sum(axis=0)
    return total / draws.n_draws


def k_posterior(draws: PosteriorDraws):
    """Histogram {k: frequency} of occupied-cluster counts and its mode (smallest on ties)."""
    ks, freq = np.unique(draws.k, return_counts=True)
    hist = {int(k): int(f) for k, f in zip(ks, freq)}
    mode = int(ks[np.argmax(freq)])
    return hist, mode


@dataclass
class FitSummary:
    resolution: int
    n_draws: int
    mean_intensity: np.ndarray
    k_histogram: dict
    k_mode: int
    dahl_iteration: int | None = None
    dahl_index: int | None = None
    dahl_z: np.ndarray | None = None
    dahl_lambdas: np.ndarray | None = None
    dahl_note: str | None = None
    metrics: dict = field(default_factory=dict)

    @property
    def cell_area(self) -> float:
        return 1.0 / self.resolution**2

    @property
    def mean_intensity_density(self) -> np.ndarray:
        """Posterior mean on the per-unit-area scale."""
        return self.mean_intensity / self.cell_area

    def dahl_intensity(self) -> np.ndarray | None:
        if self.dahl_z is None:
            return None
        return self.dahl_lambdas[self.dahl_z]

    def to_dict(self) -> dict:
        d = {
            "resolution": self.resolution,
            "n_draws": self.n_draws,
            "k_histogram": {str(k): v for k, v in self.k_histogram.items()},
            "k_mode": self.k_mode,
            "mean_intensity": [float(x) for x in self.mean_intensity],
            "dahl": None,
            "metrics": self.metrics,
        }
        if self.dahl_z is not None:
            sizes = np.bincount(self.dahl_z, minlength=self.dahl_lambdas.size)
            d["dahl"] = {
                "iteration": self.dahl_iteration,
                "draw_index": self.dahl_index,
                "k": int(self.dahl_lambdas.size),
                "lambdas": [float(x) for x in self.dahl_lambdas],
                "cluster_sizes": [int(s) for s in sizes],
                "z": [int(x) for x in self.dahl_z],
            }
        elif self.dahl_note:
            d["dahl_note"] = self.dahl_note
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FitSummary":
        dahl = d.get("dahl")
        return cls(
            resolution=int(d["resolution"]),
            n_draws=int(d["n_draws"]),
            mean_intensity=np.array(d["mean_intensity"], dtype=np.float64),
            k_histogram={int(k): int(v) for k, v in d["k_histogram"].items()},
            k_mode=int(d["k_mode"]),
            dahl_iteration=dahl["iteration"] if dahl else None,
            dahl_index=dahl["draw_index"] if dahl else None,
            dahl_z=np.array(dahl["z"], dtype=np.int64) if dahl else None,
            dahl_lambdas=np.array(dahl["lambdas"]) if dahl else None,
            dahl_note=d.get("dahl_note"),
            metrics=d.get("metrics", {}),
        )


def summarize(draws: PosteriorDraws, dahl_cap: int = DEFAULT_DAHL_CAP, dahl_thin: int | None = None,
              require_dahl: bool = False) -> FitSummary:
    """Full summary.  Dahl's draw is skipped (with a note) when n exceeds
    ``dahl_cap`` and no thinning was requested, unless ``require_dahl``."""
    hist, mode = k_posterior(draws)
    out = FitSummary(
        resolution=draws.resolution,
        n_draws=draws.n_draws,
        mean_intensity=posterior_mean_intensity(draws),
        k_histogram=hist,
        k_mode=mode,
    )
    cap = dahl_cap if dahl_thin is None else max(dahl_cap, draws.n)
    try:
        cocl = coclustering_mean(draws, max_cells=cap, thin=dahl_thin or 1)
    except CapabilityError as exc:
        if require_dahl:
            raise
        out.dahl_note = str(exc)
        return out
    res = dahl_select(draws, cocl)
    out.dahl_index = res.index
    out.dahl_iteration = int(draws.iterations[res.index])
    out.dahl_z = res.z
    out.dahl_lambdas = res.lambdas
    return out
