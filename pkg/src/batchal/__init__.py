"""Batch active learning for keyword audio: bilevel coreset selection on
Nystrom kernel features, semi-supervised pseudo-labeling, baseline acquisition
strategies, campaign simulation, and a human labeling service."""

from .audio import (
    AudioClip,
    AugmentationConfig,
    IngestError,
    MelSpectrogram,
    augment,
    ingest_wav,
    mel_spectrogram,
)
from .kernels import (
    KernelSpec,
    NystromMap,
    build_nystrom,
    kernel_eval,
    kernel_matrix,
    map_features,
)
from .proxy import (
    InnerObjective,
    ProxyModel,
    UpperObjective,
    cg_solve,
    hvp,
    objective_grad,
    objective_value,
    predict,
    train_proxy,
)
from .semisup import SslConfig, evaluate, pseudo_label, ssl_train
from .selection import (
    SelectionConfig,
    select_batch_bilevel,
    select_batch_mixed,
    select_consistency,
    select_kcenter,
    select_max_entropy,
    select_uniform,
    selection_score,
)
from .data import Dataset, PoolState, make_cluster_dataset, make_tone_dataset
from .campaign import (
    CampaignConfig,
    ExperimentResult,
    RoundLog,
    report,
    run_campaign,
    seed_initial_pool,
)

__version__ = "0.1.0"
