"""Sweep-CSV loading, filtering and curve extraction.

The expected columns are the simulator's sweep output: power_dbm, n_spans,
symbol_rate_gbaud, detector, L, modulation, i_lb, se, ci, ber, q_db, seed.
Reading never modifies the file; all selection happens on parsed records.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

REQUIRED_COLUMNS = ("power_dbm", "n_spans", "symbol_rate_gbaud", "detector",
                    "L", "se")


@dataclass(frozen=True)
class SweepRow:
    power_dbm: float
    n_spans: int
    symbol_rate_gbaud: float
    detector: str
    memory: int | None
    se: float
    ci: float
    ber: float

    @property
    def detector_label(self) -> str:
        if self.detector == "map" and self.memory is not None:
            return f"MAP L={self.memory}"
        return self.detector.upper() if self.detector == "sbs" else self.detector


def _parse_float(value: str) -> float:
    try:
        return float(value)
    except ValueError:
        return math.nan


def load_rows(path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in REQUIRED_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"CSV is missing columns: {', '.join(missing)}")
        rows = []
        for rec in reader:
            mem = rec.get("L", "")
            rows.append(SweepRow(
                power_dbm=_parse_float(rec["power_dbm"]),
                n_spans=int(float(rec["n_spans"])),
                symbol_rate_gbaud=_parse_float(rec["symbol_rate_gbaud"]),
                detector=rec["detector"].strip().lower(),
                memory=int(mem) if mem not in ("", None) else None,
                se=_parse_float(rec["se"]),
                ci=_parse_float(rec.get("ci", "nan")),
                ber=_parse_float(rec.get("ber", "nan")),
            ))
    return [r for r in rows if math.isfinite(r.se)]


def parse_detector_selector(text: str) -> tuple[str, int | None]:
    """'sbs', 'map' (any memory) or 'mapN' / 'map:N' for a specific memory."""
    t = text.strip().lower().replace(":", "")
    if t == "sbs":
        return "sbs", None
    if t == "map":
        return "map", None
    if t.startswith("map") and t[3:].isdigit():
        return "map", int(t[3:])
    raise ValueError(f"unknown detector selector {text!r}")


def select(rows, detectors=None, rates=None, power=None) -> list[SweepRow]:
    out = []
    wanted = [parse_detector_selector(d) for d in detectors] if detectors else None
    for r in rows:
        if wanted is not None and not any(
                r.detector == kind and (mem is None or r.memory == mem)
                for kind, mem in wanted):
            continue
        if rates is not None and not any(
                math.isclose(r.symbol_rate_gbaud, float(x)) for x in rates):
            continue
        if power is not None and not math.isclose(r.power_dbm, float(power)):
            continue
        out.append(r)
    return out


def curve_groups(rows) -> dict[tuple, list[SweepRow]]:
    """Group by (detector, memory, rate); each group becomes one curve."""
    groups: dict[tuple, list[SweepRow]] = {}
    for r in rows:
        groups.setdefault((r.detector, r.memory, r.symbol_rate_gbaud), []).append(r)
    return groups


def se_versus_spans(group: list[SweepRow]) -> tuple[list[int], list[float]]:
    """SE per span count; with several powers present, take the best power."""
    best: dict[int, float] = {}
    for r in group:
        if r.n_spans not in best or r.se > best[r.n_spans]:
            best[r.n_spans] = r.se
    spans = sorted(best)
    return spans, [best[s] for s in spans]


def envelope_over_rates(rows) -> tuple[list[int], list[float]]:
    """Pointwise max of se over every curve present, per span count."""
    best: dict[int, float] = {}
    for (_, _, _), group in curve_groups(rows).items():
        spans, se = se_versus_spans(group)
        for s, v in zip(spans, se):
            if s not in best or v > best[s]:
                best[s] = v
    spans = sorted(best)
    return spans, [best[s] for s in spans]


def complete_grid(rows) -> tuple[list[float], list[int]] | None:
    """(powers, spans) when every combination is present exactly, else None."""
    powers = sorted({r.power_dbm for r in rows})
    spans = sorted({r.n_spans for r in rows})
    seen = {(r.power_dbm, r.n_spans) for r in rows}
    if len(seen) == len(powers) * len(spans) and len(rows) == len(seen):
        return powers, spans
    return None
