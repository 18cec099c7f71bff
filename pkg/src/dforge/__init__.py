"""Feature distillation through averaged student-to-teacher projectors, at desk scale."""

from .data import Dataset, batches, load_idx, make_blobs, standardize
from .diagnostics import MetricsRecord, m_bc, m_da, projector_diversity
from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    MetricError,
    SpecError,
    TrainingError,
)
from .losses import (
    DistillLossConfig,
    da_loss,
    da_loss_l2_form,
    kd_baseline_loss,
    mda_loss,
    total_loss,
)
from .nets import Network, NetworkSpec, build, forward
from .projector import (
    Projector,
    ProjectorEnsemble,
    ProjectorSpec,
    ensemble_forward,
    init_ensemble,
    project,
)
from .tensor import Tensor, gelu, l2_normalize_columns, matmul, relu, softmax_cross_entropy
from .trainer import DistillConfig, distill, lr_at, pretrain_teacher, sgd_step

__version__ = "0.1.0"
