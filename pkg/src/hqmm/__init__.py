"""Hidden quantum Markov models, their classical relatives, and Stiefel-manifold learning."""
from .core import (
    TOL,
    Tolerances,
    devectorize,
    is_density,
    kron,
    random_density,
    random_stiefel,
    stiefel_residual,
    validate_density,
    vectorize,
)
from .errors import *  # noqa: F401,F403
from .models import (
    GeneralOom,
    Hmm,
    KHqmm,
    LHqmm,
    Noom,
    StandardOom,
    hmm_sequence_log_prob,
    hmm_step,
    khqmm_sequence_log_likelihood,
    khqmm_step,
    lhqmm_step_and_prob,
    log_likelihoods,
    noom_step_and_prob,
    oom_step_and_prob,
    random_hmm,
    random_khqmm,
    random_noom,
    sample_sequence,
    sequence_log_likelihood,
    validate_oom_depth,
)
from .representations import (
    CanonicalKrausDecomposition,
    choi_to_canonical_kraus,
    convert,
    general_to_standard_oom,
    hmm_to_khqmm,
    hmm_to_oom,
    khqmm_to_lhqmm,
    kraus_to_liouville,
    lhqmm_to_general_oom,
    noom_to_oom,
    reshuffle,
    validate_channel,
)
from .learning import (
    TrainingConfig,
    TrainingRun,
    batch_loss,
    conjugate_gradient,
    hyperband_search,
    momentum_renorm,
    projection_update,
    train,
    wen_yin_retraction,
)
from .evaluation import (
    baum_welch,
    classify,
    cross_validate,
    description_accuracy,
    estimate_speedup,
    kfold_split,
)
from .data import SequenceDataset, generate_dataset, generate_protocol, load_splice, reshape_sequences

__version__ = "0.1.0"
