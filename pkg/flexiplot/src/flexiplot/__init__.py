"""Figure generation for flexigrid sweep CSVs."""

from .data import SweepRow, envelope_over_rates, load_rows, se_versus_spans, select
from .render import KINDS, PlotJob, render

__version__ = "0.1.0"
