"""Figure rendering for the three supported plot kinds."""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import (complete_grid, curve_groups, envelope_over_rates, load_rows,
                   se_versus_spans, select)

KINDS = ("se_vs_spans", "se_contours", "delta_envelope")


@dataclass(frozen=True)
class PlotJob:
    input_csv: str
    kind: str
    output_path: str
    detectors: tuple = ()
    rates: tuple = ()
    power_dbm: float | None = None
    reference_rate_gbaud: float = 32.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")


def render(job: PlotJob) -> str:
    """Render one figure; returns the output path."""
    rows = load_rows(job.input_csv)
    selected = select(rows, detectors=job.detectors or None,
                      rates=job.rates or None, power=job.power_dbm)
    if not selected:
        raise ValueError("no records match the requested selection")
    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    if job.kind == "se_vs_spans":
        _render_se_vs_spans(ax, selected)
    elif job.kind == "se_contours":
        _render_se_contours(fig, ax, selected)
    else:
        _render_delta_envelope(ax, rows, selected, job)
    fig.tight_layout()
    fig.savefig(job.output_path, dpi=150)
    plt.close(fig)
    return job.output_path


def _curve_label(key) -> str:
    detector, memory, rate = key
    name = "SbS" if detector == "sbs" else (
        f"MAP L={memory}" if memory is not None else "MAP")
    return f"{name}, {rate:g} Gbaud"


def _render_se_vs_spans(ax, rows):
    for key, group in sorted(curve_groups(rows).items()):
        spans, se = se_versus_spans(group)
        ax.plot(spans, se, marker="o", label=_curve_label(key))
    ax.set_xlabel("spans")
    ax.set_ylabel("spectral efficiency [b/s/Hz]")
    ax.grid(True, alpha=0.3)
    ax.legend()


def _render_se_contours(fig, ax, rows):
    groups = curve_groups(rows)
    if len(groups) != 1:
        raise ValueError("contours need exactly one (detector, rate) selection; "
                         "narrow it with --detector/--rate")
    (key, group), = groups.items()
    grid = complete_grid(group)
    if grid is None:
        # sparse sweep: draw line cuts versus power instead of interpolating
        by_span = {}
        for r in group:
            by_span.setdefault(r.n_spans, []).append(r)
        for spans_count in sorted(by_span):
            pts = sorted(by_span[spans_count], key=lambda r: r.power_dbm)
            ax.plot([r.power_dbm for r in pts], [r.se for r in pts], marker="o",
                    label=f"{spans_count} spans")
        ax.set_xlabel("launch power per channel [dBm]")
        ax.set_ylabel("spectral efficiency [b/s/Hz]")
        ax.set_title(f"{_curve_label(key)} (incomplete grid: line cuts)")
        ax.grid(True, alpha=0.3)
        ax.legend()
        return
    powers, spans = grid
    se = np.full((len(spans), len(powers)), np.nan)
    for r in group:
        se[spans.index(r.n_spans), powers.index(r.power_dbm)] = r.se
    handle = ax.contourf(powers, spans, se, levels=12, cmap="viridis")
    fig.colorbar(handle, ax=ax, label="spectral efficiency [b/s/Hz]")
    ax.set_xlabel("launch power per channel [dBm]")
    ax.set_ylabel("spans")
    ax.set_title(_curve_label(key))


def _render_delta_envelope(ax, all_rows, selected, job: PlotJob):
    reference = select(all_rows, detectors=("sbs",),
                       rates=(job.reference_rate_gbaud,), power=job.power_dbm)
    if not reference:
        raise ValueError("reference curve (sbs at the reference rate) not in CSV")
    ref_spans, ref_se = se_versus_spans(reference)
    ref_map = dict(zip(ref_spans, ref_se))
    candidates = [r for r in selected if r.detector == "map"]
    if not candidates:
        raise ValueError("delta envelope needs map-detector records")
    for key, group in sorted(curve_groups(candidates).items()):
        spans, se = se_versus_spans(group)
        common = [(s, v) for s, v in zip(spans, se) if s in ref_map]
        ax.plot([s for s, _ in common],
                [100.0 * (v - ref_map[s]) / ref_map[s] for s, v in common],
                linewidth=0.8, alpha=0.5, label=_curve_label(key))
    env_spans, env_se = envelope_over_rates(candidates)
    common = [(s, v) for s, v in zip(env_spans, env_se) if s in ref_map]
    ax.plot([s for s, _ in common],
            [100.0 * (v - ref_map[s]) / ref_map[s] for s, v in common],
            marker="s", linewidth=2.0, color="black", label="envelope over rates")
    ax.set_xlabel("spans")
    ax.set_ylabel("relative SE gain [%]")
    ax.grid(True, alpha=0.3)
    ax.legend()
