import csv
import hashlib
from pathlib import Path

import numpy as np
import pytest

from flexiplot.cli import main as cli_main
from flexiplot.data import (complete_grid, envelope_over_rates, load_rows,
                            parse_detector_selector, se_versus_spans, select)
from flexiplot.render import PlotJob, render

HEADER = ["power_dbm", "n_spans", "symbol_rate_gbaud", "detector", "L",
          "modulation", "i_lb", "se", "ci", "ber", "q_db", "seed"]


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for r in rows:
            w.writerow(r)


def row(power, spans, rate, detector, mem, se):
    return [power, spans, rate, detector, "" if mem is None else mem,
            "qpsk", se / 2, se, 0.01, 0.001, 9.8, 1]


def synth_sweep(path):
    rows = []
    for spans in (2, 5, 10, 20):
        rows.append(row(2.0, spans, 32.5, "sbs", None, 3.0 / spans + 1.0))
        rows.append(row(2.0, spans, 32.5, "map", 1, 3.5 / spans + 1.2))
        rows.append(row(2.0, spans, 50.0, "map", 1,
                        4.5 / spans + (1.5 if spans < 10 else 0.9)))
    write_csv(path, rows)
    return path


def test_load_and_select(tmp_path):
    path = synth_sweep(tmp_path / "s.csv")
    rows = load_rows(path)
    assert len(rows) == 12
    only_map1 = select(rows, detectors=("map1",))
    assert len(only_map1) == 8
    only_50 = select(rows, rates=(50.0,))
    assert {r.symbol_rate_gbaud for r in only_50} == {50.0}


def test_detector_selector_forms():
    assert parse_detector_selector("sbs") == ("sbs", None)
    assert parse_detector_selector("map") == ("map", None)
    assert parse_detector_selector("map2") == ("map", 2)
    assert parse_detector_selector("map:2") == ("map", 2)
    with pytest.raises(ValueError):
        parse_detector_selector("mlse")


def test_se_vs_spans_values_roundtrip(tmp_path):
    # eta(N) = c/N + const must come back exactly as written
    path = synth_sweep(tmp_path / "s.csv")
    rows = select(load_rows(path), detectors=("sbs",))
    spans, se = se_versus_spans(rows)
    assert spans == [2, 5, 10, 20]
    expect = [3.0 / s + 1.0 for s in spans]
    assert se == pytest.approx(expect, abs=0)
    assert all(b < a for a, b in zip(se, se[1:]))  # monotone decreasing


def test_envelope_is_pointwise_max(tmp_path):
    # rate A dominates for small span counts, rate B afterwards
    path = tmp_path / "e.csv"
    rows = []
    for spans in (2, 5, 10, 20):
        rows.append(row(2.0, spans, 50.0, "map", 1, 6.0 - 0.3 * spans))
        rows.append(row(2.0, spans, 32.5, "map", 1, 3.4 - 0.05 * spans))
    write_csv(path, rows)
    loaded = load_rows(path)
    spans, env = envelope_over_rates(loaded)
    expect = [max(6.0 - 0.3 * s, 3.4 - 0.05 * s) for s in spans]
    assert env == pytest.approx(expect, abs=0)
    # pointwise >= each individual curve
    for rate in (50.0, 32.5):
        _, curve = se_versus_spans(select(loaded, rates=(rate,)))
        assert all(e + 1e-15 >= c for e, c in zip(env, curve))


def test_render_each_kind(tmp_path):
    path = synth_sweep(tmp_path / "s.csv")
    for kind, kwargs in [
        ("se_vs_spans", {}),
        ("delta_envelope", dict(detectors=("map",))),
    ]:
        out = tmp_path / f"{kind}.png"
        render(PlotJob(input_csv=str(path), kind=kind, output_path=str(out), **kwargs))
        assert out.exists() and out.stat().st_size > 1000


def test_render_contours_complete_grid(tmp_path):
    path = tmp_path / "grid.csv"
    rows = []
    for power in (-2.0, 0.0, 2.0):
        for spans in (2, 10, 20):
            rows.append(row(power, spans, 32.5, "map", 1,
                            4.0 - 0.1 * spans - 0.05 * (power - 1.0) ** 2))
    write_csv(path, rows)
    out = tmp_path / "c.png"
    render(PlotJob(input_csv=str(path), kind="se_contours", output_path=str(out),
                   detectors=("map1",), rates=(32.5,)))
    assert out.exists() and out.stat().st_size > 1000


def test_render_contours_incomplete_grid_falls_back(tmp_path):
    path = tmp_path / "sparse.csv"
    rows = [row(-2.0, 2, 32.5, "map", 1, 3.2), row(0.0, 2, 32.5, "map", 1, 3.3),
            row(0.0, 10, 32.5, "map", 1, 2.9)]
    write_csv(path, rows)
    out = tmp_path / "cut.png"
    render(PlotJob(input_csv=str(path), kind="se_contours", output_path=str(out),
                   detectors=("map1",), rates=(32.5,)))
    assert out.exists() and out.stat().st_size > 1000
    assert complete_grid(load_rows(path)) is None


def test_single_row_renders(tmp_path):
    path = tmp_path / "one.csv"
    write_csv(path, [row(2.0, 10, 32.5, "sbs", None, 2.5)])
    out = tmp_path / "one.png"
    render(PlotJob(input_csv=str(path), kind="se_vs_spans", output_path=str(out)))
    assert out.exists() and out.stat().st_size > 1000


def test_rendering_does_not_mutate_input(tmp_path):
    path = synth_sweep(tmp_path / "s.csv")
    before = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    render(PlotJob(input_csv=str(path), kind="se_vs_spans",
                   output_path=str(tmp_path / "im.png")))
    after = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    assert before == after


def test_missing_column_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["power_dbm", "n_spans"])
        w.writerow([1.0, 2])
    with pytest.raises(ValueError):
        load_rows(path)


def test_empty_selection_rejected(tmp_path):
    path = synth_sweep(tmp_path / "s.csv")
    with pytest.raises(ValueError):
        render(PlotJob(input_csv=str(path), kind="se_vs_spans",
                       output_path=str(tmp_path / "x.png"), rates=(75.0,)))


def test_cli_end_to_end(tmp_path, capsys):
    path = synth_sweep(tmp_path / "s.csv")
    out = tmp_path / "cli.png"
    rc = cli_main(["--csv", str(path), "--kind", "se_vs_spans", "--out", str(out)])
    assert rc == 0
    assert out.exists()
    rc = cli_main(["--csv", str(path), "--kind", "se_contours", "--out",
                   str(tmp_path / "no.png")])
    assert rc == 1  # multiple curves selected: needs narrowing
