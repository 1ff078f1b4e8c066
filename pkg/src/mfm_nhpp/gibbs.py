"""Collapsed Gibbs sampler for the MFM-Poisson grid model.

Each sweep redraws every occupied cluster's intensity from its conjugate
Gamma posterior and then revisits every cell with the MFM urn: existing
clusters are weighted by (|c| + gamma) times the Poisson likelihood under the
current intensity, a fresh cluster by gamma V_n(t+1)/V_n(t) times the
Gamma-Poisson marginal of the cell count.

Labels are 0-based and kept contiguous: a cluster that loses its last cell is
removed at once and the later labels shift down by one.
"""
from __future__ import annotations

import gzip
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .geo_ingest import GridCounts
from .mfm_model import LogVnTable, MfmConfig, NumericalError, build_log_vn, log_marginal_count

RNG_ALGORITHM = "numpy.Philox"
FORMAT_VERSION = 1


def _counts_array(counts) -> np.ndarray:
    """Counts of a GridCounts, or any 1-d vector of nonnegative integers."""
    if isinstance(counts, GridCounts):
        return np.ascontiguousarray(counts.counts, dtype=np.int64)
    arr = np.asarray(counts).reshape(-1)
    if arr.size == 0 or np.any(arr < 0) or np.any(arr != np.round(arr)):
        raise ValueError("counts must be a nonempty vector of nonnegative integers")
    return np.ascontiguousarray(arr, dtype=np.int64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class ChainState:
    z: np.ndarray  # (n,) int64 labels in 0..k-1
    lambdas: np.ndarray  # (k,) cell-level intensities
    sizes: np.ndarray  # (k,) cells per cluster
    sums: np.ndarray  # (k,) total count per cluster

    @property
    def k(self) -> int:
        return int(self.lambdas.size)

    def copy(self) -> "ChainState":
        return ChainState(self.z.copy(), self.lambdas.copy(), self.sizes.copy(), self.sums.copy())

    def check(self, counts) -> None:
        """Raise AssertionError if the bookkeeping is inconsistent."""
        cnt = _counts_array(counts)
        k = self.k
        assert self.z.min() == 0 and self.z.max() == k - 1, "labels not contiguous"
        sizes = np.bincount(self.z, minlength=k)
        sums = np.bincount(self.z, weights=cnt, minlength=k)
        assert np.all(sizes > 0), "empty cluster"
        assert np.array_equal(sizes, self.sizes), "sizes out of sync"
        assert np.array_equal(sums, self.sums), "sums out of sync"
        assert np.all(self.lambdas > 0), "nonpositive intensity"


def state_from_labels(z, counts, lambdas) -> ChainState:
    """Build a state from arbitrary integer labels, compacting them to 0..k-1."""
    _, z = np.unique(np.asarray(z), return_inverse=True)
    z = z.astype(np.int64)
    k = int(z.max()) + 1
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.size != k:
        raise ValueError(f"need {k} intensities, got {lambdas.size}")
    sizes = np.bincount(z, minlength=k).astype(np.int64)
    sums = np.bincount(z, weights=_counts_array(counts), minlength=k).astype(np.int64)
    return ChainState(z, lambdas.copy(), sizes, sums)


def init_state(counts, k_init: int, cfg: MfmConfig, rng) -> ChainState:
    """Uniform random labels over k_init clusters, intensities from the prior."""
    n = _counts_array(counts).size
    if not 1 <= k_init <= n:
        raise ValueError(f"k_init must be in [1, {n}], got {k_init}")
    z = rng.integers(0, k_init, size=n)
    _, z = np.unique(z, return_inverse=True)
    k = int(z.max()) + 1
    lambdas = rng.gamma(cfg.a, 1.0 / cfg.b, size=k)
    return state_from_labels(z, counts, lambdas)


def update_lambdas(state: ChainState, counts, cfg: MfmConfig, rng) -> ChainState:
    out = state.copy()
    _kernels.update_lambdas(out.k, out.sizes, out.sums, out.lambdas, cfg.a, cfg.b, rng)
    return out


class _Workspace:
    """Capacity-n buffers shared by the compiled kernels."""

    def __init__(self, state: ChainState, counts, cfg: MfmConfig):
        self.counts = _counts_array(counts)
        n = self.counts.size
        self.log_fact = gammaln(self.counts + 1.0)
        self.log_m = np.asarray(log_marginal_count(self.counts, cfg.a, cfg.b), dtype=np.float64).reshape(-1)
        self.z = state.z.astype(np.int64).copy()
        self.k = state.k
        self.sizes = np.zeros(n, dtype=np.int64)
        self.sums = np.zeros(n, dtype=np.int64)
        self.lambdas = np.zeros(n, dtype=np.float64)
        self.sizes[: self.k] = state.sizes
        self.sums[: self.k] = state.sums
        self.lambdas[: self.k] = state.lambdas
        self.weights = np.empty(n + 1, dtype=np.float64)

    def state(self) -> ChainState:
        k = self.k
        return ChainState(self.z.copy(), self.lambdas[:k].copy(), self.sizes[:k].copy(), self.sums[:k].copy())

    def sweep(self, order, vn: LogVnTable, cfg: MfmConfig, rng) -> LogVnTable:
        pos = 0
        while True:
            self.k, stop = _kernels.sweep_assignments(
                order, pos, self.z, self.counts, self.log_fact, self.log_m, self.k,
                self.sizes, self.sums, self.lambdas, vn.values, cfg.gamma, cfg.a, cfg.b,
                self.weights, rng,
            )
            if stop < 0:
                return vn
            vn = _grow(vn, self.k + 1)
            pos = stop


def _grow(vn: LogVnTable, need: int) -> LogVnTable:
    if need > vn.n:
        raise NumericalError(f"V_n table cannot exceed t = n = {vn.n} (asked for {need})")
    return vn.extended(min(vn.n, max(need, 2 * vn.t_max)))


def update_assignment(i: int, state: ChainState, counts, vn: LogVnTable,
                      cfg: MfmConfig, rng) -> ChainState:
    """Resample the cluster label of cell ``i`` given everything else."""
    ws = _Workspace(state, counts, cfg)
    ws.sweep(np.array([i], dtype=np.int64), vn, cfg, rng)
    return ws.state()


# ----------------------------------------------------------------------------
# Chains
# ----------------------------------------------------------------------------


@dataclass
class PosteriorDraws:
    """Post burn-in draws.  ``z[m]`` are 0-based labels; ``lambdas[m, :k[m]]``
    the matching intensities (NaN padded)."""

    z: np.ndarray  # (M, n) integer labels
    lambdas: np.ndarray  # (M, k_cap) float, NaN beyond k[m]
    k: np.ndarray  # (M,)
    resolution: int | None  # None when fitted to a bare count vector
    config: MfmConfig
    seed: int
    burnin: int
    total_iters: int
    k_init: int = 5
    scan: str = "systematic"
    thin: int = 1
    rng_algorithm: str = RNG_ALGORITHM
    iterations: np.ndarray = field(default=None)  # sweep index of each stored draw

    def __post_init__(self):
        if self.iterations is None:
            self.iterations = self.burnin + self.thin * np.arange(len(self.k))

    @classmethod
    def from_samples(cls, zs, lambdas, resolution=None, config=None) -> "PosteriorDraws":
        """Wrap hand-made draws (any integer labels; compacted per draw)."""
        zs = [np.unique(np.asarray(z), return_inverse=True)[1] for z in zs]
        lambdas = [np.atleast_1d(np.asarray(l, dtype=np.float64)) for l in lambdas]
        k = np.array([int(z.max()) + 1 for z in zs], dtype=np.int64)
        if any(l.size != kk for l, kk in zip(lambdas, k)):
            raise ValueError("each draw needs one intensity per distinct label")
        lam = np.full((len(zs), int(k.max())), np.nan)
        for j, l in enumerate(lambdas):
            lam[j, : l.size] = l
        return cls(z=np.array(zs, dtype=np.int64), lambdas=lam, k=k, resolution=resolution,
                   config=config or MfmConfig(), seed=0, burnin=0, total_iters=len(zs))

    @property
    def n(self) -> int:
        return int(self.z.shape[1])

    @property
    def n_draws(self) -> int:
        return int(self.z.shape[0])

    def __len__(self):
        return self.n_draws

    def draw(self, m: int):
        """(z, lambdas) of draw m."""
        return self.z[m], self.lambdas[m, : self.k[m]]

    def cell_intensities(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """(stop - start, n) array of lambda_{z_i} per draw."""
        sl = slice(start, stop)
        return np.take_along_axis(self.lambdas[sl], self.z[sl].astype(np.intp), axis=1)

    def header(self) -> dict:
        return {
            "format": "mfm-nhpp-draws",
            "version": FORMAT_VERSION,
            "n": self.n,
            "resolution": self.resolution,
            "config": self.config.to_dict(),
            "seed": int(self.seed),
            "rng_algorithm": self.rng_algorithm,
            "burnin": self.burnin,
            "total_iters": self.total_iters,
            "thin": self.thin,
            "k_init": self.k_init,
            "scan": self.scan,
            "n_draws": self.n_draws,
        }


def _label_dtype(n: int):
    return np.int16 if n <= np.iinfo(np.int16).max else np.int32


def run_chain(counts, cfg: MfmConfig | None = None, total_iters: int = 5000,
              burnin: int = 2000, seed: int = 0, k_init: int = 5, scan: str = "systematic",
              thin: int = 1, callback=None) -> PosteriorDraws:
    """Run the sampler and keep every ``thin``-th sweep after ``burnin``.

    ``callback(it, state)`` is invoked after each sweep if given (used by
    convergence diagnostics; it receives a snapshot and may not mutate the chain).
    """
    cfg = cfg or MfmConfig()
    if not 0 <= burnin < total_iters:
        raise ValueError("need 0 <= burnin < total_iters")
    if scan not in ("systematic", "random"):
        raise ValueError(f"scan must be 'systematic' or 'random', got {scan!r}")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    n = _counts_array(counts).size
    rng = make_rng(seed)
    state = init_state(counts, min(k_init, n), cfg, rng)
    vn = build_log_vn(n, min(n, 64), cfg)
    ws = _Workspace(state, counts, cfg)
    order = np.arange(n, dtype=np.int64)

    n_keep = (total_iters - burnin + thin - 1) // thin
    z_store = np.empty((n_keep, n), dtype=_label_dtype(n))
    k_store = np.empty(n_keep, dtype=np.int64)
    lam_store = []
    m = 0
    for it in range(total_iters):
        _kernels.update_lambdas(ws.k, ws.sizes, ws.sums, ws.lambdas, cfg.a, cfg.b, rng)
        if scan == "random":
            order = rng.permutation(n).astype(np.int64)
        vn = ws.sweep(order, vn, cfg, rng)
        if it >= burnin and (it - burnin) % thin == 0:
            z_store[m] = ws.z
            k_store[m] = ws.k
            lam_store.append(ws.lambdas[: ws.k].copy())
            m += 1
        if callback is not None:
            callback(it, ws.state())

    k_cap = int(k_store.max())
    lambdas = np.full((n_keep, k_cap), np.nan)
    for j, lam in enumerate(lam_store):
        lambdas[j, : lam.size] = lam
    return PosteriorDraws(
        z=z_store, lambdas=lambdas, k=k_store,
        resolution=counts.resolution if isinstance(counts, GridCounts) else None, config=cfg,
        seed=int(seed), burnin=burnin, total_iters=total_iters, k_init=k_init, scan=scan, thin=thin,
    )


# ----------------------------------------------------------------------------
# Draw archive: JSON header line, then one JSON record per draw
# ----------------------------------------------------------------------------


def _rle(z: np.ndarray) -> list:
    change = np.flatnonzero(np.diff(z)) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [z.size]]))
    return [[int(z[s]), int(l)] for s, l in zip(starts, lengths)]


def _unrle(runs, n: int) -> np.ndarray:
    z = np.repeat([r[0] for r in runs], [r[1] for r in runs])
    if z.size != n:
        raise ValueError(f"run-length record decodes to {z.size} labels, expected {n}")
    return z


def _open(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        raw = open(path, mode + "b")
        # no mtime or file name in the header keeps the bytes reproducible
        gz = gzip.GzipFile(filename="", fileobj=raw, mode=mode + "b", mtime=0) if mode == "w" else gzip.GzipFile(fileobj=raw)
        return io.TextIOWrapper(gz, encoding="utf-8", newline="\n"), raw
    fh = open(path, mode, encoding="utf-8", newline="\n")
    return fh, None


def save_draws(draws: PosteriorDraws, path) -> None:
    fh, raw = _open(path, "w")
    try:
        fh.write(json.dumps(draws.header(), sort_keys=True) + "\n")
        for m in range(draws.n_draws):
            z, lam = draws.draw(m)
            rec = {"it": int(draws.iterations[m]), "z": _rle(z), "lambdas": [float(x) for x in lam]}
            fh.write(json.dumps(rec) + "\n")
    finally:
        fh.close()
        if raw is not None:
            raw.close()


def load_draws(path) -> PosteriorDraws:
    fh, raw = _open(path, "r")
    try:
        head = json.loads(fh.readline())
        if head.get("format") != "mfm-nhpp-draws":
            raise ValueError(f"{path}: not a draws archive")
        n = int(head["n"])
        zs, lams, its = [], [], []
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            zs.append(_unrle(rec["z"], n))
            lams.append(rec["lambdas"])
            its.append(rec["it"])
    finally:
        fh.close()
        if raw is not None:
            raw.close()
    if not zs:
        raise ValueError(f"{path}: archive holds no draws")
    k = np.array([len(l) for l in lams], dtype=np.int64)
    lambdas = np.full((len(lams), int(k.max())), np.nan)
    for j, lam in enumerate(lams):
        lambdas[j, : len(lam)] = lam
    return PosteriorDraws(
        z=np.array(zs, dtype=_label_dtype(n)), lambdas=lambdas, k=k,
        resolution=None if head["resolution"] is None else int(head["resolution"]), config=MfmConfig.from_dict(head["config"]),
        seed=int(head["seed"]), burnin=int(head["burnin"]), total_iters=int(head["total_iters"]),
        k_init=int(head.get("k_init", 5)), scan=head.get("scan", "systematic"),
        thin=int(head.get("thin", 1)), rng_algorithm=head.get("rng_algorithm", RNG_ALGORITHM),
        iterations=np.array(its, dtype=np.int64),
    )
