"""Sparse-encoding / phaseless-decoding beam alignment for mmWave arrays.

A transmitter with N antennas and R RF chains encodes the K-sparse
beam-space channel with a stack of L balanced bipartite graphs; magnitudes
of the resulting 2ML measurements suffice to recover the support and
magnitude of the channel, noiselessly by singleton inversion and under
noise by an energy detector plus set-intersection fusion.
"""

from .channel import (
    ChannelConfig,
    NoiseModel,
    PathSet,
    PhaselessBatch,
    PrecoderFactorization,
    SparseSignal,
    abstract_row,
    beamforming_vector,
    dft_matrix,
    factorize_row,
    grid_angle,
    grid_index,
    measure,
    sigma_for_snr,
    snr_for_sigma,
    steering_vector,
    synthesize_channel,
)
from .decoder import MagnitudeEstimate, decode, decode_graph
from .encoder import (
    C1Report,
    GraphEnsemble,
    MeasurementMatrix,
    ModulationSpec,
    assemble_matrix,
    balanced_set_sizes,
    build_ensemble,
    c1_check,
    design_permutations,
    load_ensemble,
    save_ensemble,
)
from .errors import (
    BeamAlignError,
    C1Infeasible,
    C1Violation,
    ConfigError,
    MLessThanK,
)
from .harness import (
    BeamspaceMatrixEstimate,
    ExperimentConfig,
    MetricRow,
    ScanConfig,
    beamforming_gain,
    nmse,
    run_trial,
    run_trials,
    scan_array_receiver,
    simulate,
    sweep,
    write_csv,
)
from .robust import (
    DetectorConfig,
    GraphDecodeReport,
    RobustDecodeResult,
    active_right_nodes,
    estimate_sparsity,
    fuse_estimates,
    robust_decode,
    robust_decode_graph,
)
from .theory import (
    SampleComplexityBound,
    empirical_success_rate,
    equal_size_bound,
    nm_graph_prob,
    nm_graph_prob_for_sizes,
    oracle_nm_prob,
    required_graphs,
    sample_complexity_bound,
    success_prob,
)

__version__ = "0.1.0"
