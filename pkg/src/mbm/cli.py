"""Command-line front end.

Every command that writes a file also writes ``<output>.manifest.json`` with
the command line, the resolved configuration, seeds and tool version. Output
bodies depend only on flags and seeds; timestamps live in the manifest.

Exit codes: 0 success, 2 usage, 3 input parse, 4 numeric, 5 I/O.
Relative paths are resolved against ``$MBM_SEED_DIR`` when it is set.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import shlex
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import formats
from . import rng as _rng
from .channel import (
    Channel,
    EnergyReference,
    SimConfig,
    average_over_channels,
    simulate_ber_uncoded,
    simulate_ser,
)
from .core import (
    Provenance,
    analytic_eta_bound,
    analytic_mean_dmin_bound,
    analytic_qam_rayleigh_dmin,
    apply_weights,
    draw_open_loop,
    min_pairwise_distance,
    reference_psk,
    reference_qam,
)
from .errors import NumericError, ParameterError
from .optimizer import (
    BitMapping,
    PerturbationSchedule,
    mapping_cost,
    optimize_weights_multistart,
    search_bit_mapping,
)
from .stats import Mode, Statistic, analytic_do_pdf, histogram, sample_distances

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

SEED_DIR_ENV = "MBM_SEED_DIR"


class UsageError(Exception):
    pass


def resolve(path: str | os.PathLike) -> Path:
    p = Path(path)
    base = os.environ.get(SEED_DIR_ENV)
    if base and not p.is_absolute():
        return Path(base) / p
    return p


def parse_snr_grid(text: str) -> tuple[float, ...]:
    """``lo:step:hi`` inclusive of ``hi`` when it lies on the grid; a bare number is one point."""
    parts = text.split(":")
    try:
        values = [float(v) for v in parts]
    except ValueError:
        raise UsageError(f"bad SNR grid {text!r}") from None
    if len(values) == 1:
        return (values[0],)
    if len(values) != 3:
        raise UsageError(f"SNR grid must be lo:step:hi, got {text!r}")
    lo, step, hi = values
    if step <= 0 or hi < lo:
        raise UsageError(f"SNR grid needs step > 0 and hi >= lo, got {text!r}")
    n = math.floor((hi - lo) / step + 1e-9) + 1
    return tuple(round(lo + i * step, 10) for i in range(n))


def _read(path) -> str:
    return resolve(path).read_text()


def _write(path, text: str, outputs: list[str]):
    p = resolve(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True)
    p.write_text(text)
    outputs.append(str(p))


def _schedule(args) -> PerturbationSchedule:
    if not getattr(args, "schedule_json", None):
        return PerturbationSchedule()
    text = args.schedule_json
    if not text.lstrip().startswith("{"):
        text = _read(text)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise formats.FormatError(f"invalid schedule JSON: {exc}") from None
    if not isinstance(data, dict):
        raise formats.FormatError("schedule JSON must be an object")
    return PerturbationSchedule.from_dict(data)


def _manifest(argv, out_path, config: dict, seeds, outputs):
    body = {
        "command_line": " ".join(shlex.quote(a) for a in ["mbm", *argv]),
        "argv": list(argv),
        "config": config,
        "seeds": [int(s) for s in seeds],
        "tool_version": __version__,
        "outputs": list(outputs),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    p = resolve(out_path)
    mp = p.with_name(p.name + ".manifest.json")
    mp.write_text(json.dumps(body, indent=2) + "\n")
    return mp


def cmd_gen(args, argv):
    c = draw_open_loop(args.k, args.seed)
    outputs: list[str] = []
    _write(args.out, formats.constellation_to_json(c), outputs)
    _manifest(argv, args.out, {"k": args.k}, [args.seed], outputs)
    print(f"wrote {c.size} points to {outputs[0]}")


def cmd_optimize(args, argv):
    c = formats.constellation_from_json(_read(args.input))
    sched = _schedule(args)
    outputs: list[str] = []
    if args.weights:
        if args.metric != "hamming":
            raise UsageError("--weights shapes the constellation for a hamming (bit mapping) search")
        w, _ = formats.weights_from_json(_read(args.weights))
        c = apply_weights(c, w)
    if args.metric == "euclidean":
        if c.provenance is not Provenance.OPEN_LOOP_DRAW:
            raise UsageError("euclidean weight search needs an open-loop constellation")
        seeds = [args.seed] if args.restarts == 1 else [
            _rng.child_seed(args.seed, r) for r in range(args.restarts)
        ]
        trace = optimize_weights_multistart(c, sched, seeds)
        _write(args.out, formats.weights_to_json(trace.final_weights, trace.final_dmin), outputs)
        summary = f"d_min {trace.initial_dmin!r} -> {trace.final_dmin!r}"
    else:
        trace = search_bit_mapping(c, sched, args.seed)
        _write(args.out, formats.mapping_to_json(trace.mapping, trace.final_cost), outputs)
        seeds = [args.seed]
        summary = f"hamming cost {trace.initial_cost} -> {trace.final_cost}"
    if args.trace:
        _write(args.trace, formats.trace_to_csv(trace), outputs)
    config = {"metric": args.metric, "schedule": sched.to_dict(), "restarts": args.restarts}
    _manifest(argv, args.out, config, seeds, outputs)
    print(summary)


def _reference(k: int):
    if k == 1 or k % 2:
        return reference_psk(k)
    return reference_qam(k)


def cmd_simulate(args, argv):
    channel = Channel(args.channel)
    grid = parse_snr_grid(args.snr)
    cfg = SimConfig(grid, args.trials, channel, args.min_errors, args.seed, args.shards, args.energy_reference)
    mbm = channel in (Channel.RAYLEIGH_MBM_OPEN, Channel.RAYLEIGH_MBM_CLOSED, Channel.AWGN_MBM_SHAPED)
    closed = channel in (Channel.RAYLEIGH_MBM_CLOSED, Channel.AWGN_MBM_SHAPED)
    if args.weights and not closed:
        raise UsageError("--weights only applies to closed-loop MBM channels")
    if args.draws and args.const:
        raise UsageError("--draws averages fresh channel draws; do not combine with --const")
    if args.draws and (args.mapping or channel not in (Channel.RAYLEIGH_MBM_OPEN, Channel.RAYLEIGH_MBM_CLOSED)):
        raise UsageError("--draws applies to SER over the Rayleigh MBM channels")

    if args.draws:
        if args.k is None:
            raise UsageError("--draws needs --k")
        sched = _schedule(args)
        curve = average_over_channels(args.k, cfg, args.draws, channel is Channel.RAYLEIGH_MBM_CLOSED, sched)
    else:
        if args.const:
            c = formats.constellation_from_json(_read(args.const))
        elif not mbm and args.k is not None:
            c = _reference(args.k)
        else:
            raise UsageError("need --const (or --k with --draws / a QAM channel)")
        if args.weights:
            w, _ = formats.weights_from_json(_read(args.weights))
            c = apply_weights(c, w)
        if args.mapping == "natural":
            curve = simulate_ber_uncoded(c, BitMapping.natural(c.k), cfg)
        elif args.mapping:
            mapping, _ = formats.mapping_from_json(_read(args.mapping))
            curve = simulate_ber_uncoded(c, mapping, cfg)
        else:
            curve = simulate_ser(c, cfg)
    if args.label:
        curve.label = args.label

    outputs: list[str] = []
    _write(args.out, formats.curve_to_csv(curve), outputs)
    config = cfg.to_dict()
    config.update(draws=args.draws, k=args.k, es=curve.es, realized_es=curve.realized_es, unit=curve.unit, snr="Es/N0")
    _manifest(argv, args.out, config, [args.seed], outputs)
    for r in curve.rows:
        print(f"{r.snr_db:7.2f} dB  {r.errors:>9d}/{r.trials:<11d} {r.ser:.4e}")


def analytic_report(k: int) -> dict:
    return {
        "k": k,
        "mean_dmin_bound": analytic_mean_dmin_bound(k),
        "qam_rayleigh_dmin": analytic_qam_rayleigh_dmin(k),
        "eta_bound": analytic_eta_bound(k),
    }


def cmd_analytic(args, argv):
    if args.k < 1:
        raise UsageError("--k must be at least 1")
    report = analytic_report(args.k)
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        for key, val in report.items():
            print(f"{key}: {val!r}")


def cmd_dmin_stats(args, argv):
    mode = Mode(args.mode)
    sched = _schedule(args) if mode is Mode.CLOSED_LOOP else None
    values = sample_distances(args.k, args.draws, args.seed, mode, sched, args.statistic)
    edges = None
    if args.max_d is not None:
        edges = np.linspace(0.0, args.max_d, args.bins + 1)
    elif args.bins is not None:
        edges = np.linspace(0.0, max(math.ceil(values.max()), 1), args.bins + 1)
    h = histogram(values, edges)

    out = resolve(args.out)
    stem = out.with_suffix("")
    outputs: list[str] = []
    _write(out, formats.histogram_to_csv(h), outputs)
    _write(f"{stem}_scaled.csv", formats.histogram_to_csv(h, scaled=True), outputs)
    d = np.linspace(h.edges[0], h.edges[-1], 2 * h.counts.size + 1)
    _write(f"{stem}_pdf.csv", formats.pdf_to_csv(d, analytic_do_pdf(args.k, d)), outputs)
    config = {
        "k": args.k,
        "draws": args.draws,
        "mode": mode.value,
        "statistic": Statistic(args.statistic).value,
        "bins": int(h.counts.size),
        "range": [float(h.edges[0]), float(h.edges[-1])],
        "schedule": sched.to_dict() if sched else None,
        "mean": float(values.mean()),
        "median": float(np.median(values)),
    }
    _manifest(argv, args.out, config, [args.seed], outputs)
    print(f"mean {values.mean()!r}  median {np.median(values)!r}  bound {analytic_mean_dmin_bound(args.k)!r}")


def cmd_replay(args, argv):
    data = json.loads(_read(args.manifest))
    if "argv" not in data:
        raise formats.FormatError("manifest has no argv")
    return main(data["argv"])


def _uint64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v <= _rng.UINT64_MAX:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a nonnegative integer")
    return v


def _k(text: str) -> int:
    v = int(text)
    if not 1 <= v <= 16:
        raise argparse.ArgumentTypeError("k must lie in [1, 16]")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbm", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"mbm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="draw an open-loop constellation")
    g.add_argument("--k", type=_k, required=True)
    g.add_argument("--seed", type=_uint64, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    o = sub.add_parser("optimize", help="search closed-loop weights or a bit mapping")
    o.add_argument("--in", dest="input", required=True)
    o.add_argument("--weights", help="weights JSON applied before a hamming search")
    o.add_argument("--metric", choices=["euclidean", "hamming"], default="euclidean")
    o.add_argument("--seed", type=_uint64, default=0)
    o.add_argument("--schedule-json", help="inline JSON object or path to a JSON file")
    o.add_argument("--restarts", type=_positive, default=1)
    o.add_argument("--out", required=True)
    o.add_argument("--trace")
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser("simulate", help="Monte Carlo error-rate sweep")
    s.add_argument("--const")
    s.add_argument("--weights")
    s.add_argument("--mapping", help="mapping JSON, or 'natural'; switches the output to BER")
    s.add_argument("--channel", choices=[c.value for c in Channel], required=True)
    s.add_argument("--snr", required=True, help="lo:step:hi in dB (Es/N0)")
    s.add_argument("--trials", type=_positive, required=True)
    s.add_argument("--min-errors", type=_nonneg, default=200)
    s.add_argument("--draws", type=_positive)
    s.add_argument("--k", type=_k)
    s.add_argument("--seed", type=_uint64, default=0)
    s.add_argument("--shards", type=_positive, default=1)
    s.add_argument("--energy-reference", choices=[e.value for e in EnergyReference], default="ensemble",
                   help="Es for the noise level: ensemble mean, per-draw realized, or nominal unit energy")
    s.add_argument("--schedule-json")
    s.add_argument("--label")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analytic", help="closed-form distance results")
    a.add_argument("--k", type=int, required=True)
    a.add_argument("--json", action="store_true")
    a.set_defaults(func=cmd_analytic)

    d = sub.add_parser("dmin-stats", help="minimum-distance histogram with analytic overlay")
    d.add_argument("--k", type=_k, required=True)
    d.add_argument("--draws", type=_positive, required=True)
    d.add_argument("--mode", choices=[m.value for m in Mode], default="open_loop")
    d.add_argument("--statistic", choices=[m.value for m in Statistic], default="dmin")
    d.add_argument("--seed", type=_uint64, default=0)
    d.add_argument("--bins", type=_positive)
    d.add_argument("--max-d", type=float)
    d.add_argument("--schedule-json")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_dmin_stats)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.command == "dmin-stats" and args.bins is None and args.max_d is not None:
        args.bins = 100
    try:
        rc = args.func(args, argv)
    except formats.FormatError as exc:
        print(f"mbm: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (UsageError, ParameterError) as exc:
        print(f"mbm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        where = f" at trial {exc.trial}" if exc.trial is not None else ""
        print(f"mbm: numeric error{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"mbm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return rc or EXIT_OK
