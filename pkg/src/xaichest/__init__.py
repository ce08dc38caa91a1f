"""OFDM channel-estimation simulator with perturbation-mask interpretability for FNN estimators."""

from .channel import VTI_US, VTV_US, ChannelModel, apply_channel, get_channel_model, make_channel
from .errors import ConfigError, MissingArtifactError, NumericalError
from .estimators import StaParams, nmse, run_conventional
from .harness import (
    EstimatorSpec,
    RunConfig,
    compare_variants,
    generate_dataset,
    read_dataset,
    run_ber,
    run_ber_many,
    run_pipeline,
    write_dataset,
)
from .neural import FnnModel, TrainConfig, train_utility
from .phy import OfdmConfig, build_frame, demap_qpsk, modulate_qpsk
from .xai import XaiConfig, aggregate_mask, classify_subcarriers, train_interpreter

__version__ = "0.1.0"
