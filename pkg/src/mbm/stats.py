"""Empirical minimum-distance distributions and their closed-form laws."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .core import (
    Constellation,
    Provenance,
    batch_min_distance,
    batch_paired_distance,
    check_k,
)
from .errors import ParameterError
from .optimizer import PerturbationSchedule, optimize_weights

STATS_CHUNK = 4096
DEFAULT_BINS = 100
KS_MIN_SAMPLES = 100


class Mode(str, enum.Enum):
    OPEN_LOOP = "open_loop"
    CLOSED_LOOP = "closed_loop"


class Statistic(str, enum.Enum):
    DMIN = "dmin"  # true minimum over all pairs
    PAIRED = "do"  # minimum over the disjoint pairs (0,1), (2,3), ...


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ParameterError("edges must be a strictly increasing list of at least two reals")
        if counts.size != edges.size - 1 or np.any(counts < 0):
            raise ParameterError("need one nonnegative count per bin")
        if int(counts.sum()) != self.total:
            raise ParameterError(f"counts sum to {int(counts.sum())}, total says {self.total}")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total", int(self.total))

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def density(self) -> np.ndarray:
        """Counts normalized to a pdf: sum(density * widths) == 1."""
        if self.total == 0:
            return np.zeros_like(self.widths)
        return self.counts / (self.total * self.widths)

    @property
    def scaled_density(self) -> np.ndarray:
        """Density divided by its peak value."""
        dens = self.density
        peak = dens.max()
        return dens / peak if peak > 0 else dens

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def median(self) -> float:
        """Bin-interpolated median."""
        cum = np.concatenate([[0], np.cumsum(self.counts)])
        half = self.total / 2
        i = int(np.searchsorted(cum, half, side="left"))
        i = min(max(i, 1), len(cum) - 1)
        lo, hi = cum[i - 1], cum[i]
        frac = 0.0 if hi == lo else (half - lo) / (hi - lo)
        return float(self.edges[i - 1] + frac * (self.edges[i] - self.edges[i - 1]))

    def merge(self, other: "Histogram") -> "Histogram":
        if not np.array_equal(self.edges, other.edges):
            raise ParameterError("cannot merge histograms with different edges")
        return Histogram(self.edges, self.counts + other.counts, self.total + other.total)


def default_edges(values: np.ndarray, bins: int = DEFAULT_BINS) -> np.ndarray:
    top = math.ceil(float(np.max(values))) if len(values) else 1
    return np.linspace(0.0, max(top, 1), bins + 1)


def histogram(values, edges=None) -> Histogram:
    values = np.asarray(values, dtype=float)
    edges = default_edges(values) if edges is None else np.asarray(edges, dtype=float)
    counts, _ = np.histogram(values, bins=edges)
    return Histogram(edges, counts, int(counts.sum()))


def _chunk_points(k: int, seed: int, chunk: int, n: int) -> np.ndarray:
    # always a full chunk, so a longer run extends a shorter one
    g = _rng.substream(seed, _rng.STATS_DRAWS, k, chunk)
    xy = g.standard_normal((STATS_CHUNK, 2, 2**k))[:n] * math.sqrt(0.5)
    return xy[:, 0] + 1j * xy[:, 1]


def sample_distances(
    k: int,
    draws: int,
    seed: int,
    mode: Mode | str = Mode.OPEN_LOOP,
    sched: PerturbationSchedule | None = None,
    statistic: Statistic | str = Statistic.DMIN,
) -> np.ndarray:
    """Minimum distance of ``draws`` independent CN(0, 1) constellations.

    Draws come in chunks of ``STATS_CHUNK`` constellations, chunk ``j``
    keyed by ``(seed, k, j)``; the values are a pure function of
    ``(k, draws, seed, mode, sched, statistic)``. In closed-loop mode each
    draw is shaped by the weight search first, seeded per draw index.
    """
    k = check_k(k)
    seed = _rng.check_seed(seed)
    if isinstance(draws, bool) or not isinstance(draws, (int, np.integer)) or draws < 1:
        raise ParameterError(f"draws must be a positive integer, got {draws!r}")
    mode = Mode(mode)
    statistic = Statistic(statistic)
    if k == 1 or statistic is Statistic.PAIRED:
        measure = batch_paired_distance
    else:
        measure = batch_min_distance

    out = np.empty(draws)
    for j, start in enumerate(range(0, draws, STATS_CHUNK)):
        n = min(STATS_CHUNK, draws - start)
        pts = _chunk_points(k, seed, j, n)
        if mode is Mode.CLOSED_LOOP:
            for r in range(n):
                c = Constellation(k, pts[r], Provenance.OPEN_LOOP_DRAW)
                tr = optimize_weights(c, sched, _rng.child_seed(seed, _rng.WEIGHT_SEARCH, start + r))
                pts[r] = tr.final_weights.weights * pts[r]
        out[start : start + n] = measure(pts)
    return out


def sample_dmin_distribution(
    k: int,
    draws: int,
    seed: int,
    mode: Mode | str = Mode.OPEN_LOOP,
    sched: PerturbationSchedule | None = None,
    edges=None,
    statistic: Statistic | str = Statistic.DMIN,
) -> Histogram:
    values = sample_distances(k, draws, seed, mode, sched, statistic)
    return histogram(values, edges)


def analytic_do_pdf(k: int, d):
    """Density of the paired minimum distance: 2^(k-1) d exp(-2^(k-2) d^2)."""
    k = check_k(k, hi=64)
    d = np.asarray(d, dtype=float)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ParameterError("d must be finite and nonnegative")
    out = 2.0 ** (k - 1) * d * np.exp(-(2.0 ** (k - 2)) * d * d)
    return float(out) if out.ndim == 0 else out


def analytic_do_cdf(k: int, d):
    k = check_k(k, hi=64)
    d = np.maximum(np.asarray(d, dtype=float), 0.0)
    out = -np.expm1(-(2.0 ** (k - 2)) * d * d)
    return float(out) if out.ndim == 0 else out


def rayleigh_pair_cdf(d):
    """CDF of |h_i - h_j| for independent CN(0, 1) states."""
    return analytic_do_cdf(1, d)


def ks_statistic(data, cdf) -> float:
    """Kolmogorov-Smirnov distance between data and a continuous CDF.

    ``data`` is either raw samples (exact statistic) or a :class:`Histogram`,
    in which case the empirical CDF is only known at bin edges and the
    returned value is the supremum over those edges.
    """
    if isinstance(data, Histogram):
        if data.total < KS_MIN_SAMPLES:
            raise ParameterError(f"need at least {KS_MIN_SAMPLES} samples, got {data.total}")
        emp = np.concatenate([[0], np.cumsum(data.counts)]) / data.total
        return float(np.max(np.abs(emp - np.asarray(cdf(data.edges)))))
    x = np.sort(np.asarray(data, dtype=float).ravel())
    n = x.size
    if n < KS_MIN_SAMPLES:
        raise ParameterError(f"need at least {KS_MIN_SAMPLES} samples, got {n}")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def mean_and_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
