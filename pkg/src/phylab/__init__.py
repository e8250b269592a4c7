"""Constellation design, end-to-end autoencoders and matrix Renyi information
measures for physical-layer experiments."""

from .core import (
    Constellation,
    DegenerateConstellationError,
    DimensionMismatchError,
    DivergenceError,
    ExperimentConfig,
    InsufficientPointsError,
    PhylabError,
    Rng,
    SingularGeometryError,
    SymbolSet,
    average_power,
    min_distance,
    pairwise_distances,
    project_power,
)
from .constellation import (
    NoiseLevel,
    compare_constellations,
    gradient_search,
    optimize_constellation,
    pe_asymptotic,
    pe_gradient,
)
from .nn import Network, backward, build_network, count_params, forward
from .channel import ChannelDataset, gen_channel_dataset, interp_linear, ls_estimate, sample_multipath
from .autoencoder import (
    AutoencoderPair,
    evaluate_ser,
    extract_constellation,
    risk_gap,
    train_autoencoder,
)
from .renyi import conditional_entropy, joint_entropy, mutual_information, normalize_gram, renyi_entropy
from .infoplane import build_estimator, emit_planes, mirrored_pairs, train_with_capture
from .suites import run_suite, validate_outputs

__version__ = "0.1.0"
