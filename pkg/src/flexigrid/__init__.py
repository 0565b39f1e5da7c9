"""Flexi-grid coherent WDM link simulator.

End-to-end toolkit: PM-QPSK multiplex generation, split-step Manakov fiber
propagation with inline switch filtering, coherent receive DSP, trellis and
symbol-by-symbol detection, and achievable-rate / spectral-efficiency
estimation with confidence intervals.
"""

from .air import (AirResult, ber_to_q_db, estimate_air, q_db_to_ber,
                  relative_gain, spectral_efficiency)
from .detect import (AuxChannelModel, bcjr_detect, channel_shortener,
                     estimate_channel, sbs_detect)
from .fiber import FiberParams, LinkSpec, SsfmControl, amplify, propagate_link, propagate_span
from .filters import (FilterKind, FilterSpec, FrequencyResponse, apply_filter,
                      bessel_response, cascade_power_loss, rrc_response,
                      super_gaussian_response)
from .rxdsp import RxChainConfig, SampledStream, cd_compensate, front_end, mmse_ffe_2x2, phase_track
from .txgen import CarrierStream, WdmConfig, assemble_wdm, gray_map, generate_wdm, modulate_carrier
from .waveform import DualPolWaveform, read_waveform, write_waveform

__version__ = "0.1.0"
