"""Stage-wise segmentation of battery cycling histories via stationary invariants."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateInputError,
    DimensionError,
    DomainError,
    IntegrityError,
    PipelineError,
    SchemaError,
    SingularityError,
    StagewiseError,
    UsageError,
)
from .ingest import BatteryDataset, CycleRecord, load_dataset, truncate_to_min_length, write_csv  # noqa: E402
from .monitor import CycleScore, MonitoringModel, fit_monitor, hotelling_t2_limit, score_cycle  # noqa: E402
from .psr import (  # noqa: E402
    EmbeddedCycle,
    EmbeddingParams,
    PSRConfig,
    embed,
    embed_multivariate,
    select_r,
    select_tau,
)
from .segment import Segmentation, SegmenterConfig, StageRange, divide_stages, score_stream  # noqa: E402
from .ssa import (  # noqa: E402
    EpochStats,
    InvariantSeries,
    SSAConfig,
    StationaryBasis,
    adf_is_stationary,
    kld_to_standard_normal,
    optimize_rotation,
    pooled_whitener,
    project_invariants,
    select_d,
    ssa_objective,
)
from .synth import GroundTruth, SynthSpec, generate  # noqa: E402
