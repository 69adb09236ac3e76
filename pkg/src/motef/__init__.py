"""Decentralized stochastic optimization with compressed communication.

MoTEF (momentum tracking with error feedback) and its STORM variant, the
BEER, Choco-SGD, DSGD and D2 baselines, gossip topologies, contractive
compressors, test problems, Lyapunov diagnostics and an experiment harness.
"""

from .algorithms import STEPS, AlgState, HyperParams, MetricsRecord, Streams, init_state, run
from .compressors import CompressorSpec, alpha_of, compress, message_bits, parse_compressor, verify_contractive
from .diagnostics import (
    build_constant_system,
    consensus_report,
    lyapunov_components,
    theoretical_stepsizes,
    verify_descent_constants,
)
from .errors import CapabilityError, ConfigError, ConstructionError, ParseError, SpecError, ValidationError
from .harness import ExperimentConfig, load_config, run_experiment, steady_state_error, sweep
from .problems import LibSVMDataset, load_libsvm, logreg_oracles, parse_libsvm, shard, synth_new, synth_xstar
from .topology import Topology, build_topology, spectral_gap, validate_mixing

__version__ = "0.1.0"
