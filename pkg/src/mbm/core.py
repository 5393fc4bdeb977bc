"""Constellation types, distance kernels and closed-form distance results.

Complex amplitudes are stored as ``numpy.complex128``; a point's ``re``/``im``
pair only appears at the JSON boundary (see :mod:`mbm.formats`).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .errors import ParameterError

K_MAX = 16
POWER_RTOL = 1e-9
ENERGY_ATOL = 1e-12

# rows per block in the O(M^2) pair scan; bounds the scratch matrix to ~8 MB
_PAIR_BLOCK = 2**19


class Provenance(str, enum.Enum):
    OPEN_LOOP_DRAW = "open_loop_draw"
    CLOSED_LOOP = "closed_loop"
    REFERENCE_QAM = "reference_qam"
    REFERENCE_PSK = "reference_psk"


def check_k(k, lo: int = 1, hi: int = K_MAX) -> int:
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
        raise ParameterError(f"k must be an integer, got {k!r}")
    if not lo <= k <= hi:
        raise ParameterError(f"k must lie in [{lo}, {hi}], got {k}")
    return int(k)


def _as_points(values) -> np.ndarray:
    pts = np.array(values, dtype=np.complex128).ravel()
    if not np.all(np.isfinite(pts)):
        raise ParameterError("constellation points must be finite")
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True)
class Constellation:
    """An ordered set of ``2**k`` complex signal points."""

    k: int
    points: np.ndarray
    provenance: Provenance = Provenance.OPEN_LOOP_DRAW
    seed: int | None = None

    def __post_init__(self):
        k = check_k(self.k)
        pts = _as_points(self.points)
        if pts.size != 2**k:
            raise ParameterError(f"expected {2**k} points for k={k}, got {pts.size}")
        prov = Provenance(self.provenance)
        if self.seed is not None:
            object.__setattr__(self, "seed", _rng.check_seed(self.seed))
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "provenance", prov)
        if prov in (Provenance.REFERENCE_QAM, Provenance.REFERENCE_PSK):
            if abs(self.energy - 1.0) > ENERGY_ATOL:
                raise ParameterError(f"reference constellation energy {self.energy!r} != 1")

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def energy(self) -> float:
        """Average symbol energy (1/M) * sum |p_i|^2."""
        return float(np.mean(self.points.real**2 + self.points.imag**2))

    def __eq__(self, other):
        if not isinstance(other, Constellation):
            return NotImplemented
        return (
            self.k == other.k
            and self.provenance == other.provenance
            and self.seed == other.seed
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None


@dataclass(frozen=True)
class WeightVector:
    """Per-state complex weights with total power ``sum |w_i|^2 == 2**k``."""

    k: int
    weights: np.ndarray

    def __post_init__(self):
        k = check_k(self.k)
        w = _as_points(self.weights)
        if w.size != 2**k:
            raise ParameterError(f"expected {2**k} weights for k={k}, got {w.size}")
        target = float(2**k)
        if abs(power(w) - target) > POWER_RTOL * target:
            raise ParameterError(f"weight power {power(w)!r} violates sum |w|^2 == {target}")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "weights", w)

    @classmethod
    def ones(cls, k: int) -> "WeightVector":
        return cls(k, np.ones(2 ** check_k(k), dtype=np.complex128))

    def __eq__(self, other):
        if not isinstance(other, WeightVector):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.weights, other.weights)

    __hash__ = None


@dataclass(frozen=True)
class DistanceReport:
    d_min: float
    argmin_pair: tuple[int, int]
    all_pairs_count: int


def power(weights) -> float:
    w = np.asarray(weights)
    return float(np.sum(w.real**2 + w.imag**2))


def normalize_power(weights: np.ndarray) -> np.ndarray:
    """Scale ``weights`` so that sum |w_i|^2 equals their count."""
    return weights * math.sqrt(weights.size / power(weights))


def draw_open_loop(k: int, seed: int) -> Constellation:
    """Draw ``2**k`` i.i.d. CN(0, 1) channel states.

    Real and imaginary parts are independent N(0, 1/2) samples from the
    ziggurat normal sampler of a PCG64 stream keyed by ``seed``.
    """
    k = check_k(k)
    seed = _rng.check_seed(seed)
    g = _rng.substream(seed, _rng.CHANNEL_DRAW)
    xy = g.standard_normal((2, 2**k)) * math.sqrt(0.5)
    return Constellation(k, xy[0] + 1j * xy[1], Provenance.OPEN_LOOP_DRAW, seed)


def points_of(c) -> np.ndarray:
    if isinstance(c, Constellation):
        return c.points
    return _as_points(c)


def min_pairwise_distance(c) -> DistanceReport:
    """Exact minimum distance over all unordered point pairs.

    Accepts a :class:`Constellation` or any sequence of complex points. Ties
    resolve to the lexicographically lowest ``(i, j)`` with ``i < j``.
    """
    p = points_of(c)
    m = p.size
    if m < 2:
        raise ParameterError("need at least two points for a pairwise distance")
    if m <= 256:
        # fast path: one shot over the upper triangle (row-major == lexicographic)
        iu, ju = triu_pairs(m)
        d = np.abs(p[iu] - p[ju])
        t = int(np.argmin(d))
        return DistanceReport(float(d[t]), (int(iu[t]), int(ju[t])), d.size)

    best, pair = math.inf, (0, 1)
    rows = max(1, _PAIR_BLOCK // m)
    col = np.arange(m)
    for i0 in range(0, m - 1, rows):
        i1 = min(i0 + rows, m - 1)
        d = np.abs(p[i0:i1, None] - p[None, :])
        d[col[None, :] <= np.arange(i0, i1)[:, None]] = np.inf
        t = int(np.argmin(d))
        r, s = divmod(t, m)
        if d[r, s] < best:
            best, pair = float(d[r, s]), (i0 + r, s)
    return DistanceReport(best, pair, m * (m - 1) // 2)


_TRIU_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def triu_pairs(m: int) -> tuple[np.ndarray, np.ndarray]:
    if m not in _TRIU_CACHE:
        iu, ju = np.triu_indices(m, 1)
        iu.setflags(write=False)
        ju.setflags(write=False)
        _TRIU_CACHE[m] = (iu, ju)
    return _TRIU_CACHE[m]


def batch_min_distance(points: np.ndarray) -> np.ndarray:
    """Row-wise minimum pairwise distance of an ``(n, M)`` array of constellations."""
    iu, ju = triu_pairs(points.shape[1])
    return np.abs(points[:, iu] - points[:, ju]).min(axis=1)


def batch_paired_distance(points: np.ndarray) -> np.ndarray:
    """Row-wise minimum over the disjoint pairs (0,1), (2,3), ...

    This is the independent-pairs surrogate that upper-bounds the true
    minimum distance and has a closed-form law.
    """
    return np.abs(points[:, 0::2] - points[:, 1::2]).min(axis=1)


def apply_weights(c: Constellation, w) -> Constellation:
    """Shape an open-loop constellation: point i becomes ``w_i * h_i``.

    ``w`` may be a :class:`WeightVector` or a raw sequence of complex
    weights (the power constraint is then not checked).
    """
    if c.provenance is not Provenance.OPEN_LOOP_DRAW:
        raise ParameterError(f"weights apply to open-loop draws, got {c.provenance.value}")
    if isinstance(w, WeightVector):
        if w.k != c.k:
            raise ParameterError(f"weight vector k={w.k} does not match constellation k={c.k}")
        weights = w.weights
    else:
        weights = _as_points(w)
        if weights.size != c.size:
            raise ParameterError(f"{weights.size} weights for {c.size} points")
    return Constellation(c.k, weights * c.points, Provenance.CLOSED_LOOP, c.seed)


def analytic_mean_dmin_bound(k: int) -> float:
    """Upper bound sqrt(pi) * 2**(-k/2) on the mean open-loop minimum distance."""
    k = check_k(k, hi=10**6)
    return math.sqrt(math.pi) * 2.0 ** (-k / 2)


def analytic_qam_rayleigh_dmin(k: int) -> float:
    """Unit-energy M-QAM minimum distance scaled by E|h| = sqrt(pi)/2."""
    k = check_k(k, hi=10**6)
    return 0.5 * math.sqrt(6 * math.pi / (2.0**k - 1))


def analytic_eta_bound(k: int) -> float:
    """Bound on the MBM-to-QAM minimum distance ratio; tends to sqrt(2/3)."""
    k = check_k(k, hi=10**6)
    return math.sqrt(2 / 3) * math.sqrt(1 - 2.0**-k)


def reference_qam(k: int) -> Constellation:
    """Square M-QAM with unit average energy, points in row-major grid order."""
    k = check_k(k)
    if k not in (2, 4, 6):
        raise ParameterError(f"square QAM needs k in {{2, 4, 6}}, got {k}")
    m = 2 ** (k // 2)
    levels = np.arange(-(m - 1), m, 2, dtype=float)
    grid = levels[None, :] + 1j * levels[::-1, None]
    # mean energy of the odd-integer grid is 2(M-1)/3
    pts = grid.ravel() / math.sqrt(2 * (2**k - 1) / 3)
    return Constellation(k, pts, Provenance.REFERENCE_QAM)


def reference_psk(k: int) -> Constellation:
    """Unit-circle M-PSK starting at phase 0 (k=1 gives antipodal +-1)."""
    k = check_k(k)
    m = 2**k
    pts = np.exp(2j * np.pi * np.arange(m) / m)
    if k == 1:
        pts = np.array([1.0, -1.0], dtype=np.complex128)
    elif k == 2:
        pts = np.array([1, 1j, -1, -1j], dtype=np.complex128)
    return Constellation(k, pts, Provenance.REFERENCE_PSK)
