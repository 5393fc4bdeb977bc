"""Stochastic perturbation search for closed-loop weights and bit labels.

Both searches share one accept/reject loop: propose a random local change to
the incumbent, keep it only if the objective strictly improves, and stop
after ``max_trials`` proposals or ``stall_limit`` consecutive rejections.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as _rng
from .core import (
    Constellation,
    Provenance,
    WeightVector,
    triu_pairs,
    min_pairwise_distance,
    power,
)
from .errors import NumericError, ParameterError

# random draws are generated in fixed-size chunks; part of the stream layout
_CHUNK = 1024
MAPPING_K_MAX = 10


@dataclass(frozen=True)
class PerturbationSchedule:
    initial_radius: float = 0.5
    decay_factor: float = 0.9
    decay_every: int = 50
    min_radius: float = 1e-4
    max_trials: int = 20_000
    stall_limit: int = 3_000

    def __post_init__(self):
        for name in ("initial_radius", "decay_factor", "min_radius"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParameterError(f"{name} must be a finite real, got {v!r}")
        for name in ("decay_every", "max_trials", "stall_limit"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ParameterError(f"{name} must be an integer, got {v!r}")
        if self.initial_radius <= 0 or self.min_radius <= 0:
            raise ParameterError("radii must be positive")
        if self.min_radius > self.initial_radius:
            raise ParameterError("min_radius must not exceed initial_radius")
        if not 0 < self.decay_factor <= 1:
            raise ParameterError(f"decay_factor must lie in (0, 1], got {self.decay_factor}")
        if self.decay_every < 1 or self.stall_limit < 1:
            raise ParameterError("decay_every and stall_limit must be positive")
        # max_trials == 0 is allowed and returns the starting point untouched
        if self.max_trials < 0:
            raise ParameterError("max_trials must be nonnegative")

    @classmethod
    def from_dict(cls, data: dict) -> "PerturbationSchedule":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown schedule fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizationTrace:
    """Per-trial record of a weight search.

    ``trials``, ``accepted`` and ``d_values`` are parallel arrays with one
    entry per proposal; ``d_values`` holds the candidate's objective.
    """

    trials: np.ndarray
    accepted: np.ndarray
    d_values: np.ndarray
    final_weights: WeightVector
    initial_dmin: float
    final_dmin: float
    max_power_residual: float = 0.0
    seed: int | None = None

    @property
    def iterations(self) -> list[tuple[int, bool, float]]:
        return list(zip(self.trials.tolist(), self.accepted.tolist(), self.d_values.tolist()))

    @property
    def improvement(self) -> float:
        if self.initial_dmin == 0:
            return math.inf if self.final_dmin > 0 else 1.0
        return self.final_dmin / self.initial_dmin


@dataclass(frozen=True)
class BitMapping:
    """``label_of[i]`` is the k-bit label carried by constellation point i."""

    k: int
    label_of: tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(v) for v in self.label_of)
        if len(labels) != 2**self.k or sorted(labels) != list(range(2**self.k)):
            raise ParameterError("label_of must be a permutation of 0 .. 2**k - 1")
        object.__setattr__(self, "label_of", labels)

    @classmethod
    def natural(cls, k: int) -> "BitMapping":
        return cls(k, tuple(range(2**k)))

    @property
    def index_of(self) -> tuple[int, ...]:
        inv = [0] * len(self.label_of)
        for i, lab in enumerate(self.label_of):
            inv[lab] = i
        return tuple(inv)


@dataclass
class MappingTrace:
    trials: np.ndarray
    accepted: np.ndarray
    costs: np.ndarray
    mapping: BitMapping
    initial_cost: int
    final_cost: int
    pairs: np.ndarray = field(repr=False, default=None)


def evaluate_metric(points) -> float:
    """Euclidean design metric: minimum pairwise distance of the points."""
    return min_pairwise_distance(points).d_min


def _check_open_loop(c: Constellation):
    if not isinstance(c, Constellation):
        raise ParameterError("expected a Constellation")
    if c.provenance is not Provenance.OPEN_LOOP_DRAW:
        raise ParameterError(f"weights are optimized for open-loop draws, got {c.provenance.value}")


# non-finite values are detected and reported explicitly below
@np.errstate(over="ignore", invalid="ignore")
def optimize_weights(
    c: Constellation, sched: PerturbationSchedule | None = None, seed: int = 0
) -> OptimizationTrace:
    """Maximize the minimum distance of ``{w_i h_i}`` subject to sum |w_i|^2 = M.

    Starts from unit weights. Each trial perturbs one uniformly chosen weight
    by a sample uniform over the disk of the current radius, rescales the
    whole vector back onto the power sphere and keeps the candidate iff its
    minimum distance strictly exceeds the incumbent's. The radius shrinks by
    ``decay_factor`` after every ``decay_every`` accepted trials, never below
    ``min_radius``.
    """
    _check_open_loop(c)
    sched = sched or PerturbationSchedule()
    seed = _rng.check_seed(seed)
    g = _rng.substream(seed, _rng.WEIGHT_SEARCH)

    h = c.points
    m = h.size
    iu, ju = triu_pairs(m)
    target = float(m)

    w = np.ones(m, dtype=np.complex128)
    pts = w * h
    d_best = float(np.abs(pts[iu] - pts[ju]).min())
    d_init = d_best
    radius = float(sched.initial_radius)

    n = sched.max_trials
    trials = np.arange(1, n + 1, dtype=np.int64)
    accepted = np.zeros(n, dtype=bool)
    d_values = np.empty(n, dtype=np.float64)
    n_acc = stall = 0
    worst = 0.0
    t = 0
    while t < n:
        size = min(_CHUNK, n - t)
        idx = g.integers(0, m, size)
        rad = np.sqrt(g.random(size))
        phase = np.exp(2j * np.pi * g.random(size))
        for q in range(size):
            cand = w.copy()
            cand[idx[q]] += radius * rad[q] * phase[q]
            p = power(cand)
            if not (math.isfinite(p) and p > 0):
                raise NumericError(f"weight power became {p!r}", trial=t + 1)
            cand *= math.sqrt(target / p)
            worst = max(worst, abs(power(cand) - target) / target)
            pts = cand * h
            d = float(np.abs(pts[iu] - pts[ju]).min())
            if not math.isfinite(d):
                raise NumericError(f"objective became {d!r}", trial=t + 1)
            d_values[t] = d
            t += 1
            if d > d_best:
                accepted[t - 1] = True
                w, d_best = cand, d
                n_acc += 1
                stall = 0
                if n_acc % sched.decay_every == 0:
                    radius = max(radius * sched.decay_factor, sched.min_radius)
            else:
                stall += 1
                if stall >= sched.stall_limit:
                    break
        if stall >= sched.stall_limit:
            break

    weights = WeightVector(c.k, w)
    return OptimizationTrace(
        trials=trials[:t],
        accepted=accepted[:t],
        d_values=d_values[:t],
        final_weights=weights,
        initial_dmin=d_init,
        final_dmin=d_best,
        max_power_residual=worst,
        seed=seed,
    )


def optimize_weights_multistart(
    c: Constellation, sched: PerturbationSchedule | None = None, seeds=(0,)
) -> OptimizationTrace:
    """Run one independent search per seed and keep the best (first on ties)."""
    seeds = list(seeds)
    if not seeds:
        raise ParameterError("multistart needs at least one seed")
    best = None
    for s in seeds:
        tr = optimize_weights(c, sched, s)
        if best is None or tr.final_dmin > best.final_dmin:
            best = tr
    return best


def nearest_pairs(points, count: int | None = None) -> np.ndarray:
    """The ``count`` closest point pairs, as an ``(n, 2)`` index array.

    Defaults to ``M`` pairs (capped at the number of pairs). Ordering is by
    distance, then by ``(i, j)``.
    """
    p = np.asarray(points.points if isinstance(points, Constellation) else points)
    m = p.size
    iu, ju = triu_pairs(m)
    d = np.abs(p[iu] - p[ju])
    count = m if count is None else count
    count = min(count, d.size)
    order = np.lexsort((ju, iu, d))[:count]
    return np.stack([iu[order], ju[order]], axis=1)


def mapping_cost(mapping: BitMapping, pairs: np.ndarray) -> int:
    """Total Hamming distance between the labels of each pair."""
    lab = np.asarray(mapping.label_of)
    return int(np.bitwise_count(lab[pairs[:, 0]] ^ lab[pairs[:, 1]]).sum())


def search_bit_mapping(
    c: Constellation, sched: PerturbationSchedule | None = None, seed: int = 0
) -> MappingTrace:
    """Label search: minimize the Hamming cost over the M nearest pairs.

    Each trial swaps the labels of two distinct uniformly chosen points,
    which flips the bits where those labels differ while keeping the map a
    bijection. Only the trial budget and stall limit of the schedule are used.
    """
    if not isinstance(c, Constellation):
        raise ParameterError("expected a Constellation")
    if c.k > MAPPING_K_MAX:
        raise ParameterError(f"bit mapping search supports k <= {MAPPING_K_MAX}")
    sched = sched or PerturbationSchedule()
    seed = _rng.check_seed(seed)
    g = _rng.substream(seed, _rng.MAPPING_SEARCH)

    m = c.size
    pairs = nearest_pairs(c)
    lab = np.arange(m, dtype=np.int64)
    cost = int(np.bitwise_count(lab[pairs[:, 0]] ^ lab[pairs[:, 1]]).sum())
    initial = cost

    n = sched.max_trials
    accepted = np.zeros(n, dtype=bool)
    costs = np.empty(n, dtype=np.int64)
    stall = t = 0
    while t < n and stall < sched.stall_limit:
        size = min(_CHUNK, n - t)
        a = g.integers(0, m, size)
        b = g.integers(0, m - 1, size)
        b += b >= a
        for q in range(size):
            cand = lab.copy()
            cand[a[q]], cand[b[q]] = lab[b[q]], lab[a[q]]
            cc = int(np.bitwise_count(cand[pairs[:, 0]] ^ cand[pairs[:, 1]]).sum())
            costs[t] = cc
            t += 1
            if cc < cost:
                accepted[t - 1] = True
                lab, cost = cand, cc
                stall = 0
            else:
                stall += 1
                if stall >= sched.stall_limit:
                    break

    return MappingTrace(
        trials=np.arange(1, t + 1, dtype=np.int64),
        accepted=accepted[:t],
        costs=costs[:t],
        mapping=BitMapping(c.k, tuple(lab.tolist())),
        initial_cost=initial,
        final_cost=cost,
        pairs=pairs,
    )


def optimize_bit_mapping(
    c: Constellation, sched: PerturbationSchedule | None = None, seed: int = 0
) -> BitMapping:
    return search_bit_mapping(c, sched, seed).mapping
