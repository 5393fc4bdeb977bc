"""File formats: constellation/weight/mapping JSON and the plot-ready CSVs.

All writers are deterministic and floats are written with ``repr`` (shortest
round-trip form), so write -> read -> write is byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .channel import SerCurve, SerRow
from .core import Constellation, Provenance, WeightVector
from .errors import ParameterError
from .optimizer import BitMapping, MappingTrace, OptimizationTrace
from .stats import Histogram

CURVE_HEADER = ["snr_db", "errors", "trials", "rate", "label"]
TRACE_HEADER = ["trial", "accepted", "d_value"]
HISTOGRAM_HEADER = ["bin_left", "bin_right", "count", "density"]
PDF_HEADER = ["d", "pdf"]


class FormatError(ParameterError):
    """Input file does not match the expected schema."""


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _points_json(values) -> list[dict]:
    return [{"re": float(z.real), "im": float(z.imag)} for z in values]


def _points_from(items) -> np.ndarray:
    try:
        return np.array([complex(float(p["re"]), float(p["im"])) for p in items])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad point list: {exc}") from None


def _load(text_or_path):
    if isinstance(text_or_path, Path):
        text_or_path = text_or_path.read_text()
    try:
        return json.loads(text_or_path)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from None


def _build(factory, *args):
    try:
        return factory(*args)
    except FormatError:
        raise
    except (ParameterError, TypeError, ValueError) as exc:
        raise FormatError(str(exc)) from None


def _require(data, *keys):
    if not isinstance(data, dict):
        raise FormatError("expected a JSON object")
    missing = [k for k in keys if k not in data]
    if missing:
        raise FormatError(f"missing fields: {missing}")


def constellation_to_json(c: Constellation) -> str:
    return _dumps(
        {"k": c.k, "provenance": c.provenance.value, "seed": c.seed, "points": _points_json(c.points)}
    )


def constellation_from_json(text) -> Constellation:
    data = _load(text)
    _require(data, "k", "provenance", "seed", "points")
    try:
        prov = Provenance(data["provenance"])
    except ValueError:
        raise FormatError(f"unknown provenance {data['provenance']!r}") from None
    return _build(Constellation, data["k"], _points_from(data["points"]), prov, data["seed"])


def weights_to_json(w: WeightVector, achieved_dmin: float) -> str:
    return _dumps(
        {
            "k": w.k,
            "weights": _points_json(w.weights),
            "achieved_dmin": float(achieved_dmin),
            "metric": "euclidean",
        }
    )


def weights_from_json(text) -> tuple[WeightVector, float]:
    data = _load(text)
    _require(data, "k", "weights", "achieved_dmin", "metric")
    if data["metric"] != "euclidean":
        raise FormatError(f"expected a euclidean weight file, got metric {data['metric']!r}")
    return _build(WeightVector, data["k"], _points_from(data["weights"])), float(data["achieved_dmin"])


def mapping_to_json(m: BitMapping, achieved_cost: int) -> str:
    return _dumps(
        {"k": m.k, "label_of": list(m.label_of), "achieved_cost": int(achieved_cost), "metric": "hamming"}
    )


def mapping_from_json(text) -> tuple[BitMapping, int]:
    data = _load(text)
    _require(data, "k", "label_of", "achieved_cost", "metric")
    if data["metric"] != "hamming":
        raise FormatError(f"expected a hamming mapping file, got metric {data['metric']!r}")
    return _build(BitMapping, data["k"], data["label_of"]), int(data["achieved_cost"])


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_csv(text, header) -> list[list[str]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != header:
        raise FormatError(f"expected CSV header {','.join(header)}")
    return rows[1:]


def curve_to_csv(curves) -> str:
    if isinstance(curves, SerCurve):
        curves = [curves]
    rows = []
    for c in curves:
        rows += [[repr(r.snr_db), r.errors, r.trials, repr(r.ser), c.label] for r in c.rows]
    return _csv(CURVE_HEADER, rows)


def curves_from_csv(text) -> list[SerCurve]:
    curves: dict[str, SerCurve] = {}
    for row in _read_csv(text, CURVE_HEADER):
        try:
            snr, err, n, _, label = float(row[0]), int(row[1]), int(row[2]), row[3], row[4]
        except (ValueError, IndexError) as exc:
            raise FormatError(f"bad curve row {row}: {exc}") from None
        curves.setdefault(label, SerCurve([], label)).rows.append(SerRow(snr, err, n))
    return list(curves.values())


def trace_to_csv(trace: OptimizationTrace | MappingTrace) -> str:
    values = trace.d_values if isinstance(trace, OptimizationTrace) else trace.costs
    rows = zip(trace.trials.tolist(), trace.accepted.astype(int).tolist(), values.tolist())
    return _csv(TRACE_HEADER, [[t, a, repr(v)] for t, a, v in rows])


def trace_from_csv(text) -> list[tuple[int, bool, float]]:
    return [(int(t), a == "1", float(v)) for t, a, v in _read_csv(text, TRACE_HEADER)]


def histogram_to_csv(h: Histogram, scaled: bool = False) -> str:
    dens = h.scaled_density if scaled else h.density
    rows = [
        [repr(float(lo)), repr(float(hi)), int(c), repr(float(d))]
        for lo, hi, c, d in zip(h.edges[:-1], h.edges[1:], h.counts, dens)
    ]
    return _csv(HISTOGRAM_HEADER, rows)


def histogram_from_csv(text) -> Histogram:
    rows = _read_csv(text, HISTOGRAM_HEADER)
    if not rows:
        raise FormatError("empty histogram")
    edges = [float(r[0]) for r in rows] + [float(rows[-1][1])]
    counts = [int(r[2]) for r in rows]
    return Histogram(np.array(edges), np.array(counts), sum(counts))


def pdf_to_csv(d, pdf) -> str:
    return _csv(PDF_HEADER, [[repr(float(x)), repr(float(y))] for x, y in zip(d, pdf)])


def csv_body(text: str) -> str:
    """Everything after the header line."""
    return text.split("\n", 1)[1] if "\n" in text else ""
