"""Monte Carlo symbol/bit error rates with maximum-likelihood detection.

SNR is Es/N0 with ``N0 = Es / 10**(snr_db / 10)``. Two choices of Es:

* ``ensemble`` (default): the received energy averaged over the channel
  ensemble. When averaging over draws this is the mean of the per-draw
  energies, so every draw sees the same N0, just as the QAM/Rayleigh
  baseline is referenced to E|h|^2 rather than to each fade. A single
  constellation is its own ensemble.
* ``realized``: the average energy (1/M) sum |p_i|^2 of the exact points
  being simulated, per draw (an instantaneous-SNR reference).
* ``nominal``: unit transmit power times E|h|^2 = 1 for every MBM channel,
  open or closed loop. For the QAM/PSK channels it is the energy of the
  transmitted constellation.

For open- and closed-loop MBM the channel is already inside the points and
the receiver sees ``y = p_i + n``; the QAM/Rayleigh baseline draws a fresh
CN(0, 1) fade per symbol and detects coherently.

Trials at each SNR point are cut into fixed blocks of ``BLOCK`` symbols.
Block ``b`` at grid index ``s`` always draws from the substream keyed by
``(seed, s, b)``; shards only decide which worker computes which block, and
counts are reduced in block order. Curves are therefore identical for any
shard count.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import rng as _rng
from .core import Constellation, Provenance, apply_weights, check_k, draw_open_loop
from .errors import ParameterError
from .optimizer import BitMapping, PerturbationSchedule, optimize_weights

BLOCK = 8192
EARLY_STOP_FRACTION = 0.1


class EnergyReference(str, enum.Enum):
    ENSEMBLE = "ensemble"
    REALIZED = "realized"
    NOMINAL = "nominal"


class Channel(str, enum.Enum):
    RAYLEIGH_MBM_OPEN = "rayleigh_mbm_open"
    RAYLEIGH_MBM_CLOSED = "rayleigh_mbm_closed"
    RAYLEIGH_QAM = "rayleigh_qam"
    AWGN_QAM = "awgn_qam"
    AWGN_MBM_SHAPED = "awgn_mbm_shaped"


_MBM = {Channel.RAYLEIGH_MBM_OPEN, Channel.RAYLEIGH_MBM_CLOSED, Channel.AWGN_MBM_SHAPED}

_ACCEPTS = {
    Channel.RAYLEIGH_MBM_OPEN: {Provenance.OPEN_LOOP_DRAW},
    Channel.RAYLEIGH_MBM_CLOSED: {Provenance.CLOSED_LOOP},
    Channel.AWGN_MBM_SHAPED: {Provenance.CLOSED_LOOP, Provenance.OPEN_LOOP_DRAW},
    Channel.RAYLEIGH_QAM: {Provenance.REFERENCE_QAM, Provenance.REFERENCE_PSK},
    Channel.AWGN_QAM: {Provenance.REFERENCE_QAM, Provenance.REFERENCE_PSK},
}


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings. ``min_errors == 0`` disables early stopping."""

    snr_grid_db: tuple[float, ...]
    trials_per_point: int
    channel: Channel
    min_errors: int = 200
    seed: int = 0
    shards: int = 1
    energy_reference: EnergyReference = EnergyReference.ENSEMBLE

    def __post_init__(self):
        grid = tuple(float(v) for v in self.snr_grid_db)
        if not grid:
            raise ParameterError("snr_grid_db must not be empty")
        if not all(math.isfinite(v) for v in grid):
            raise ParameterError("snr_grid_db values must be finite")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ParameterError("snr_grid_db must be strictly increasing")
        for name in ("trials_per_point", "shards"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ParameterError(f"{name} must be a positive integer, got {v!r}")
        if isinstance(self.min_errors, bool) or not isinstance(self.min_errors, (int, np.integer)) or self.min_errors < 0:
            raise ParameterError(f"min_errors must be a nonnegative integer, got {self.min_errors!r}")
        try:
            channel = Channel(self.channel)
        except ValueError:
            raise ParameterError(f"unknown channel {self.channel!r}") from None
        try:
            ref = EnergyReference(self.energy_reference)
        except ValueError:
            raise ParameterError(f"unknown energy reference {self.energy_reference!r}") from None
        object.__setattr__(self, "snr_grid_db", grid)
        object.__setattr__(self, "channel", channel)
        object.__setattr__(self, "energy_reference", ref)
        object.__setattr__(self, "seed", _rng.check_seed(self.seed))

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_grid_db"] = list(self.snr_grid_db)
        d["channel"] = self.channel.value
        d["energy_reference"] = self.energy_reference.value
        return d

    @property
    def is_mbm(self) -> bool:
        return self.channel in _MBM


@dataclass(frozen=True)
class SerRow:
    snr_db: float
    errors: int
    trials: int

    @property
    def ser(self) -> float:
        return self.errors / self.trials

    rate = ser


@dataclass
class SerCurve:
    """Error-rate curve. For bit-error curves ``trials`` counts bits."""

    rows: list[SerRow]
    label: str
    es: float | None = None  # energy the noise level was referenced to
    realized_es: float | None = None
    unit: str = "symbol"
    meta: dict = field(default_factory=dict)

    @property
    def snr_db(self) -> np.ndarray:
        return np.array([r.snr_db for r in self.rows])

    @property
    def rates(self) -> np.ndarray:
        return np.array([r.ser for r in self.rows])

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.errors for r in self.rows], dtype=np.int64)

    @property
    def trials(self) -> np.ndarray:
        return np.array([r.trials for r in self.rows], dtype=np.int64)


def noise_variance(es: float, snr_db: float) -> float:
    return es / 10.0 ** (snr_db / 10.0)


def reference_energy(c: Constellation, cfg: SimConfig) -> float:
    if cfg.energy_reference is EnergyReference.NOMINAL and cfg.is_mbm:
        return 1.0
    return c.energy


def _run_block(points, channel, n0, n, g, bit_cost):
    """Simulate ``n`` symbols; returns (symbol errors, bit errors)."""
    m = points.size
    tx = g.integers(0, m, n)
    noise = g.standard_normal((2, n)) * math.sqrt(n0 / 2)
    if channel is Channel.RAYLEIGH_QAM:
        fade = g.standard_normal((2, n)) * math.sqrt(0.5)
        h = fade[0] + 1j * fade[1]
        y = h * points[tx] + (noise[0] + 1j * noise[1])
        cand = h[:, None] * points[None, :]
    else:
        y = points[tx] + (noise[0] + 1j * noise[1])
        cand = points[None, :]
    diff = y[:, None] - cand
    rx = np.argmin(diff.real**2 + diff.imag**2, axis=1)
    wrong = rx != tx
    sym = int(np.count_nonzero(wrong))
    bits = int(bit_cost[tx[wrong], rx[wrong]].sum()) if bit_cost is not None else sym
    return sym, bits


def _sweep(points, es, cfg: SimConfig, bit_cost, bits_per_symbol):
    nblocks = -(-cfg.trials_per_point // BLOCK)
    floor = math.ceil(EARLY_STOP_FRACTION * cfg.trials_per_point)
    pool = ThreadPoolExecutor(cfg.shards) if cfg.shards > 1 else None
    rows = []
    try:
        for s, snr in enumerate(cfg.snr_grid_db):
            n0 = noise_variance(es, snr)

            def block(b, s=s, n0=n0):
                n = min(BLOCK, cfg.trials_per_point - b * BLOCK)
                g = _rng.substream(cfg.seed, _rng.SYMBOLS, s, b)
                return n, _run_block(points, cfg.channel, n0, n, g, bit_cost)

            errors = symbols = 0
            done = False
            for start in range(0, nblocks, cfg.shards):
                ids = range(start, min(start + cfg.shards, nblocks))
                results = list(pool.map(block, ids)) if pool else [block(b) for b in ids]
                for n, (_, err) in results:
                    errors += err
                    symbols += n
                    if cfg.min_errors and errors >= cfg.min_errors and symbols >= floor:
                        done = True
                        break
                if done:
                    break
            rows.append(SerRow(snr, errors, symbols * bits_per_symbol))
    finally:
        if pool:
            pool.shutdown()
    return rows


def _check_channel(c: Constellation, channel: Channel):
    if c.provenance not in _ACCEPTS[channel]:
        raise ParameterError(
            f"channel {channel.value} does not accept a {c.provenance.value} constellation"
        )


def _explicit_es(es) -> float:
    es = float(es)
    if not (math.isfinite(es) and es > 0):
        raise ParameterError(f"reference energy must be positive and finite, got {es!r}")
    return es


def simulate_ser(
    c: Constellation, cfg: SimConfig, label: str | None = None, es: float | None = None
) -> SerCurve:
    """SER curve of one constellation; ``es`` overrides the reference energy."""
    if not isinstance(c, Constellation) or c.size < 2:
        raise ParameterError("need a constellation with at least two points")
    _check_channel(c, cfg.channel)
    es = reference_energy(c, cfg) if es is None else _explicit_es(es)
    rows = _sweep(c.points, es, cfg, None, 1)
    return SerCurve(rows, label or f"{cfg.channel.value}:k={c.k}", es=es, realized_es=c.energy)


def hamming_table(mapping: BitMapping) -> np.ndarray:
    lab = np.asarray(mapping.label_of, dtype=np.int64)
    return np.bitwise_count(lab[:, None] ^ lab[None, :]).astype(np.int64)


def simulate_ber_uncoded(
    c: Constellation,
    mapping: BitMapping,
    cfg: SimConfig,
    label: str | None = None,
    es: float | None = None,
) -> SerCurve:
    """Bit error rate: each symbol error costs the Hamming distance between labels."""
    if not isinstance(c, Constellation) or c.size < 2:
        raise ParameterError("need a constellation with at least two points")
    if mapping.k != c.k:
        raise ParameterError(f"mapping k={mapping.k} does not match constellation k={c.k}")
    _check_channel(c, cfg.channel)
    es = reference_energy(c, cfg) if es is None else _explicit_es(es)
    rows = _sweep(c.points, es, cfg, hamming_table(mapping), c.k)
    return SerCurve(
        rows, label or f"{cfg.channel.value}:k={c.k}:ber", es=es, realized_es=c.energy, unit="bit"
    )


def draw_seed(seed: int, draw: int) -> int:
    """Channel seed of the ``draw``-th realization in an averaged run."""
    return _rng.child_seed(seed, _rng.DRAW_SEEDS, draw)


def noise_seed(seed: int, draw: int) -> int:
    """Noise/symbol seed of the ``draw``-th realization in an averaged run."""
    return _rng.child_seed(seed, _rng.SYMBOLS, draw)


def search_seed(seed: int, draw: int) -> int:
    return _rng.child_seed(seed, _rng.WEIGHT_SEARCH, draw)


def average_over_channels(
    k: int,
    cfg: SimConfig,
    draws: int,
    optimize: bool,
    sched: PerturbationSchedule | None = None,
    label: str | None = None,
) -> SerCurve:
    """Trial-weighted SER over ``draws`` seeded channel realizations.

    Draw ``d`` uses channel seed ``draw_seed(cfg.seed, d)`` and noise seed
    ``noise_seed(cfg.seed, d)``, so open- and closed-loop runs with the same
    config see identical channels and noise. With ``optimize`` the weights
    are searched on the same realization that is then simulated. With the
    ensemble energy reference all draws are built first and share one N0.
    """
    k = check_k(k)
    if isinstance(draws, bool) or not isinstance(draws, (int, np.integer)) or draws < 1:
        raise ParameterError(f"draws must be a positive integer, got {draws!r}")
    if cfg.channel not in (Channel.RAYLEIGH_MBM_OPEN, Channel.RAYLEIGH_MBM_CLOSED):
        raise ParameterError("channel averaging applies to the Rayleigh MBM channels")
    channel = Channel.RAYLEIGH_MBM_CLOSED if optimize else Channel.RAYLEIGH_MBM_OPEN

    errors = np.zeros(len(cfg.snr_grid_db), dtype=np.int64)
    trials = np.zeros(len(cfg.snr_grid_db), dtype=np.int64)
    energies = []
    shaped = []
    for d in range(draws):
        c = draw_open_loop(k, draw_seed(cfg.seed, d))
        if optimize:
            tr = optimize_weights(c, sched, search_seed(cfg.seed, d))
            c = apply_weights(c, tr.final_weights)
        shaped.append(c)
    es = None
    if cfg.energy_reference is EnergyReference.ENSEMBLE:
        es = float(np.mean([c.energy for c in shaped]))
    for d, c in enumerate(shaped):
        curve = simulate_ser(c, replace(cfg, channel=channel, seed=noise_seed(cfg.seed, d)), es=es)
        errors += curve.errors
        trials += curve.trials
        energies.append((curve.es, curve.realized_es))
    rows = [SerRow(s, int(e), int(t)) for s, e, t in zip(cfg.snr_grid_db, errors, trials)]
    return SerCurve(
        rows,
        label or f"{channel.value}:k={k}:draws={draws}",
        es=float(np.mean([e for e, _ in energies])),
        realized_es=float(np.mean([r for _, r in energies])),
        meta={"draws": draws, "optimize": bool(optimize)},
    )


def snr_at_rate(curve: SerCurve, target: float) -> float:
    """SNR where the curve first falls to ``target``.

    Interpolates linearly in (dB, log10 rate) between the last grid point at
    or above the target and the next one. Returns NaN if the curve never
    crosses.
    """
    x = curve.snr_db
    r = curve.rates
    lt = math.log10(target)
    for i in range(len(r) - 1):
        if r[i] >= target > r[i + 1]:
            if r[i + 1] == 0:
                return float(x[i + 1])
            a, b = math.log10(r[i]), math.log10(r[i + 1])
            return float(x[i] + (lt - a) * (x[i + 1] - x[i]) / (b - a))
    return math.nan


def horizontal_gap(worse: SerCurve, better: SerCurve, target: float) -> float:
    """dB offset ``snr(worse) - snr(better)`` at error rate ``target``."""
    return snr_at_rate(worse, target) - snr_at_rate(better, target)
