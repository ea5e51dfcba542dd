"""Online deep learning with hedged backpropagation."""

from .experiments import ConfigError, ExperimentConfig, SuiteConfig, load_suite, preset_suite, replicate, run_suite
from .harness import ExperimentResult, SegmentWindow, expected_depth, run_prequential, write_metrics
from .network import HedgedNetwork, NetConfig, forward, init_network, load_checkpoint, predict, save_checkpoint
from .streams import ConceptSpec, CsvSource, StreamSpec, cd1, cd2, generate_concept, read_csv_stream, syn8
from .trainers import (
    BaselineHyperParams,
    HbpHyperParams,
    HedgeBackprop,
    OnlineBackprop,
    StepRecord,
    hbp_step,
    hedge_regret_audit,
    ogd_step,
    tuned_beta,
)

__version__ = "0.1.0"
