"""Experiment configuration: YAML schema, validation and construction helpers.

The file format mirrors the module parameters directly; frequencies are given
in GHz / Gbaud for readability and converted here. ``oversampling: auto``
picks the smallest even samples-per-symbol whose rate covers twice the
occupied multiplex bandwidth (headroom for nonlinear broadening).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import yaml

from ..fiber import FiberParams, LinkSpec, SsfmControl
from ..filters import FilterKind, FilterSpec
from ..rxdsp import RxChainConfig
from ..txgen import WdmConfig, default_oversampling


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class DetectorSpec:
    kind: str                 # "sbs" or "map"
    memory: int = 0           # trellis memory L (map only)

    def __post_init__(self):
        if self.kind not in ("sbs", "map"):
            raise ConfigError("detector kind must be 'sbs' or 'map'")
        if self.kind == "map" and self.memory < 0:
            raise ConfigError("map detector memory must be >= 0")
        if self.kind == "sbs" and self.memory != 0:
            raise ConfigError("sbs detector carries no trellis memory")

    @property
    def label(self) -> str:
        return self.kind if self.memory == 0 else f"{self.kind}{self.memory}"


@dataclass(frozen=True)
class SweepGrid:
    powers_dbm: tuple
    spans: tuple
    rates_gbaud: tuple

    def __post_init__(self):
        if not self.powers_dbm or not self.spans or not self.rates_gbaud:
            raise ConfigError("sweep lists must be non-empty")
        if any(s < 0 for s in self.spans):
            raise ConfigError("span counts must be >= 0")

    def points(self):
        for rate in self.rates_gbaud:
            for spans in self.spans:
                for power in self.powers_dbm:
                    yield float(power), int(spans), float(rate)

    def __len__(self):
        return len(self.powers_dbm) * len(self.spans) * len(self.rates_gbaud)


@dataclass(frozen=True)
class ExperimentConfig:
    wdm: WdmConfig                 # template; rate and length vary per point
    link: LinkSpec                 # template; span count varies per point
    ssfm: SsfmControl
    rx: RxChainConfig
    detectors: tuple
    sweep: SweepGrid
    n_clusters: int
    symbols_per_cluster: int
    master_seed: int
    output_path: str
    oversampling_auto: bool = True
    est_memory: int = 6
    workers: int = 1
    dump_dir: str | None = None

    def __post_init__(self):
        if self.n_clusters < 1 or self.symbols_per_cluster < 64:
            raise ConfigError("averaging needs >= 1 cluster of >= 64 symbols")
        if not self.detectors:
            raise ConfigError("at least one detector is required")
        if self.wdm.modulation != "qpsk":
            if any(d.kind == "map" for d in self.detectors):
                raise ConfigError("trellis detection is defined for QPSK only")
        if self.est_memory < 1:
            raise ConfigError("est_memory must be >= 1")

    def wdm_for(self, rate_gbaud: float) -> WdmConfig:
        rate = rate_gbaud * 1e9
        if self.oversampling_auto:
            sps = default_oversampling(self.wdm.n_channels, self.wdm.spacing_hz,
                                       rate, self.wdm.rolloff)
        else:
            sps = self.wdm.oversampling
        return replace(self.wdm, symbol_rate_hz=rate, oversampling=sps,
                       n_symbols=self.symbols_per_cluster)

    def link_for(self, n_spans: int) -> LinkSpec:
        return replace(self.link, n_spans=n_spans)


def _filter_spec(node, default_symbol_rate_hz=0.0) -> FilterSpec:
    kind = FilterKind(node["kind"])
    return FilterSpec(kind=kind,
                      order=int(node.get("order", 1)),
                      bandwidth_3db_hz=float(node.get("bandwidth_3db_ghz", 0.0)) * 1e9,
                      rolloff=float(node.get("rolloff", 0.0)),
                      symbol_rate_hz=float(node.get("symbol_rate_gbaud", 0.0)) * 1e9
                      or default_symbol_rate_hz)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    try:
        return _build(raw)
    except KeyError as exc:
        raise ConfigError(f"missing configuration key: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _build(raw: dict) -> ExperimentConfig:
    w = raw["wdm"]
    sweep = raw["sweep"]
    averaging = raw.get("averaging", {})
    symbols = int(averaging.get("symbols_per_cluster", 8192))
    oversampling = w.get("oversampling", "auto")
    auto = oversampling == "auto"
    rate0 = float(sweep["rates_gbaud"][0]) * 1e9
    sps0 = default_oversampling(int(w["n_channels"]), float(w["spacing_ghz"]) * 1e9,
                                rate0, float(w.get("rolloff", 0.1))) \
        if auto else int(oversampling)
    wdm = WdmConfig(n_channels=int(w["n_channels"]),
                    spacing_hz=float(w["spacing_ghz"]) * 1e9,
                    symbol_rate_hz=rate0,
                    rolloff=float(w.get("rolloff", 0.1)),
                    n_symbols=symbols,
                    oversampling=sps0,
                    modulation=w.get("modulation", "qpsk"),
                    detune_fraction=float(w.get("detune_fraction", 0.01)))

    li = raw["link"]
    fiber = FiberParams(dispersion_ps_nm_km=float(li["dispersion_ps_nm_km"]),
                        attenuation_db_km=float(li["attenuation_db_km"]),
                        gamma_w_km=float(li["gamma"]),
                        length_km=float(li["span_km"]))
    wss = _filter_spec(li["wss"]) if li.get("wss") else None
    link = LinkSpec(n_spans=0, fiber=fiber,
                    edfa_gain_db=li.get("edfa_gain_db"),
                    edfa_nf_db=li.get("edfa_nf_db", 6.0),
                    roadm_every_spans=int(li.get("roadm_every_spans", 2)),
                    wss_per_roadm=int(li.get("wss_per_roadm", 2)),
                    wss_filter=wss,
                    wss_grid_hz=wdm.spacing_hz if wss else None)
    ss = li.get("ssfm", {})
    ssfm = SsfmControl(step_policy=ss.get("policy", "adaptive"),
                       max_step_km=float(ss.get("max_step_km", 1.0)),
                       nonlinear_phase_bound_rad=float(
                           ss.get("nonlinear_phase_bound_rad", 3e-3)))

    r = raw.get("rx", {})
    rx = RxChainConfig(
        optical_filter=_filter_spec(r["optical_filter"]) if "optical_filter" in r
        else RxChainConfig().optical_filter,
        electrical_filter=_filter_spec(r["electrical_filter"]) if "electrical_filter" in r
        else RxChainConfig().electrical_filter,
        ffe_taps=int(r.get("ffe_taps", 31)),
        ffe_step=float(r.get("ffe_step", 1e-3)),
        training_symbols=int(r.get("training_symbols", 4000)),
        ffe_passes=int(r.get("ffe_passes", 2)),
        phase_window=int(r.get("phase_window", 64)),
        linewidth_hz=float(r.get("linewidth_hz", 0.0)))

    detectors = []
    for node in raw["detectors"]:
        detectors.append(DetectorSpec(kind=node["kind"],
                                      memory=int(node.get("memory", 0))))

    grid = SweepGrid(powers_dbm=tuple(float(p) for p in sweep["powers_dbm"]),
                     spans=tuple(int(s) for s in sweep["spans"]),
                     rates_gbaud=tuple(float(g) for g in sweep["rates_gbaud"]))

    return ExperimentConfig(
        wdm=wdm, link=link, ssfm=ssfm, rx=rx,
        detectors=tuple(detectors), sweep=grid,
        n_clusters=int(averaging.get("clusters", 6)),
        symbols_per_cluster=symbols,
        master_seed=int(raw.get("master_seed", 0)),
        output_path=str(raw.get("output", "sweep.csv")),
        oversampling_auto=auto,
        est_memory=int(r.get("est_memory", 6)),
        workers=int(raw.get("workers", 1)),
        dump_dir=raw.get("dump_waveforms"))
