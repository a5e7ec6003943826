"""Compressed decentralized SGD over wireless device-to-device networks:
digital and analog (over-the-air) transmission protocols, slot schedulers,
closed-form optimality-gap bounds, and a deterministic experiment harness.
"""

from .analog import ZetaSchedule, adaptive_zeta, analog_round
from .bounds import (BoundParams, analog_gap_bound, digital_gap_bound,
                     omega_digital, p_fn, zeta0_fn)
from .channel import ChannelConfig, calibrate_power, draw_block, equal_snr_override
from .digital import bit_budget, digital_round, rows_from_budget
from .harness import ExperimentConfig, RunTrace, load_config, parse_config, run, sweep
from .learner import (FleetState, LearningRate, LocalDataset, OptimizerState,
                      choco_round_ideal, estimate_fstar, loss_and_gradient,
                      partition_noniid, sgd_step, synthetic_dataset)
from .rlc import QuantizerSpec, RlcCodec, fwht, quantize
from .scheduling import (AnalogSchedule, DigitalSchedule, analog_schedule,
                         auxiliary_graph, digital_schedule, greedy_color,
                         tdma_schedule)
from .topology import (MixingMatrix, Topology, beta_norm, build_topology,
                       default_alpha, mixing_matrix, spectral_gap)

__version__ = "0.1.0"
