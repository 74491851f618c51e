"""Recursive division of a cycling history into degradation stages.

From the current stage origin the first ``window`` cycles are embedded,
synchronized, and used to learn a stationary basis and a T² monitor.  The
following cycles are scored one at a time; once ``consecutive_required``
cycles in a row exceed ``alpha`` in abnormality rate, the first of them
opens a new stage and the whole fit restarts there.
"""
from __future__ import annotations

import csv
import json
import logging
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PipelineError, UsageError
from .ingest import BatteryDataset, CycleRecord, truncate_to_min_length
from .monitor import CycleScore, MonitoringModel, fit_monitor, score_cycle
from .psr import EmbeddingParams, PSRConfig, embed_multivariate, merge_params, select_params
from .ssa import SSAConfig, StationaryBasis, fit_stationary_basis, project_invariants

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmenterConfig:
    window: int = 15
    alpha: float = 0.05
    variance_target: float = 0.85
    consecutive_required: int = 2
    psr: PSRConfig = field(default_factory=PSRConfig)
    ssa: SSAConfig = field(default_factory=SSAConfig)
    d: int | None = None

    def __post_init__(self):
        if self.window < 3:
            raise UsageError("window must be at least 3 cycles")
        if self.consecutive_required < 1:
            raise UsageError("consecutive_required must be at least 1")
        if not 0 < self.alpha < 1:
            raise UsageError("alpha must lie in (0, 1)")
        if not 0 < self.variance_target <= 1:
            raise UsageError("variance_target must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


class Decision(str, Enum):
    CONTINUE = "continue"
    PENDING = "pending"
    SWITCH = "switch"


@dataclass(frozen=True, eq=False)
class StageModel:
    """Everything fitted on one training window."""

    start_cycle: int
    params: EmbeddingParams
    per_variable: tuple[EmbeddingParams, ...]
    sync_length: int
    basis: StationaryBasis
    monitor: MonitoringModel
    d_reselected: bool

    def invariants(self, cycle: CycleRecord):
        emb = embed_multivariate(cycle, self.params)
        return project_invariants(self.basis, emb.data[: self.sync_length]), emb

    def score(self, cycle: CycleRecord) -> CycleScore:
        inv, _ = self.invariants(cycle)
        return score_cycle(self.monitor, inv, cycle.cycle_index)


def fit_stage(cycles: Sequence[CycleRecord], config: SegmenterConfig = SegmenterConfig()) -> StageModel:
    """Fit embedding parameters, stationary basis and monitor on a training window."""
    if len(cycles) < 2:
        raise UsageError("a training window needs at least 2 cycles")
    names = cycles[0].variable_names
    per_var = tuple(select_params([c.variables[n] for c in cycles], config.psr) for n in names)
    params = merge_params(per_var)
    embedded, M = truncate_to_min_length([embed_multivariate(c, params).data for c in cycles])

    sel = fit_stationary_basis(embedded, d=config.d, config=config.ssa)
    if sel.d == 0:
        raise PipelineError(f"no stationary source passes the ADF test in the window starting at "
                            f"cycle {cycles[0].cycle_index}")
    basis = sel.basis
    training = [project_invariants(basis, X) for X in embedded]
    monitor = fit_monitor(training, config.variance_target, config.alpha)
    log.info("stage model at cycle %d: tau=%d r=%d M=%d d=%d R=%d limit=%.4g",
             cycles[0].cycle_index, params.tau, params.r, M, basis.d, monitor.R, monitor.t2_limit)
    return StageModel(cycles[0].cycle_index, params, per_var, M, basis, monitor, config.d is None)


class StreamState:
    """Switch-point bookkeeping for cycles scored after a training window.

    ``pending_start`` is the first cycle of the current run of exceedances.
    """

    def __init__(self, model: StageModel | None, next_index: int, alpha: float,
                 consecutive_required: int = 2):
        self.model = model
        self.next_index = next_index
        self.alpha = alpha
        self.consecutive_required = consecutive_required
        self.run = 0
        self.pending_start: int | None = None

    def observe(self, cycle_index: int, abnormality_rate: float) -> Decision:
        if cycle_index != self.next_index:
            raise UsageError(f"expected cycle {self.next_index}, got {cycle_index}")
        self.next_index += 1
        if abnormality_rate > self.alpha:
            if self.run == 0:
                self.pending_start = cycle_index
            self.run += 1
            if self.run >= self.consecutive_required:
                return Decision.SWITCH
            return Decision.PENDING
        self.run = 0
        self.pending_start = None
        return Decision.CONTINUE


def score_stream(state: StreamState, next_cycle: CycleRecord) -> tuple[CycleScore, Decision]:
    """Score the next cycle and update the switch bookkeeping in ``state``.

    On :attr:`Decision.SWITCH` the new stage starts at ``state.pending_start``.
    """
    if state.model is None:
        raise UsageError("stream state has no fitted model")
    if next_cycle.cycle_index != state.next_index:
        raise UsageError(f"expected cycle {state.next_index}, got {next_cycle.cycle_index}")
    score = state.model.score(next_cycle)
    return score, state.observe(next_cycle.cycle_index, score.abnormality_rate)


def classify_rates(rates: Sequence[float], alpha: float = 0.05,
                   consecutive_required: int = 2) -> list[Decision]:
    """Decisions for a bare sequence of abnormality rates."""
    st = StreamState(None, 1, alpha, consecutive_required)
    return [st.observe(i, ar) for i, ar in enumerate(rates, start=1)]


@dataclass
class StageRange:
    start_cycle: int
    end_cycle: int
    d: int
    tau: int
    r: int
    objective: float
    sync_length: int
    n_pcs: int
    t2_limit: float
    converged: bool
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.start_cycle > self.end_cycle:
            raise UsageError(f"empty stage {self.start_cycle}-{self.end_cycle}")

    @property
    def length(self) -> int:
        return self.end_cycle - self.start_cycle + 1

    def label(self) -> str:
        return f"{self.start_cycle}-{self.end_cycle}"


@dataclass(frozen=True)
class CycleTrace:
    cycle: int
    stage_id: int
    abnormality_rate: float
    t2_limit: float
    role: str  # "train" or "test"
    decision: str


@dataclass
class Segmentation:
    dataset_name: str
    n_cycles: int
    stages: list[StageRange]
    trace: list[CycleTrace]
    config: dict
    flags: list[str] = field(default_factory=list)

    def ranges(self) -> list[tuple[int, int]]:
        return [(s.start_cycle, s.end_cycle) for s in self.stages]

    def boundaries(self) -> list[int]:
        """First cycle of every stage after the first."""
        return [s.start_cycle for s in self.stages[1:]]

    def check_partition(self):
        """Raise :class:`AssertionError` unless the stages tile ``1..n_cycles``."""
        assert self.stages, "no stages"
        assert self.stages[0].start_cycle == 1, "first stage does not start at cycle 1"
        for a, b in zip(self.stages, self.stages[1:]):
            assert b.start_cycle == a.end_cycle + 1, f"gap or overlap between {a.label()} and {b.label()}"
        assert self.stages[-1].end_cycle == self.n_cycles, "last stage does not end at the final cycle"

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset_name,
            "n_cycles": self.n_cycles,
            "n_stages": len(self.stages),
            "stages": [asdict(s) for s in self.stages],
            "trace": [asdict(t) for t in self.trace],
            "config": self.config,
            "flags": self.flags,
            "version": __version__,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    def write_scores_csv(self, path) -> Path:
        """Flat per-cycle table ``cycle,stage_id,AR,t2_limit,role``."""
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cycle", "stage_id", "AR", "t2_limit", "role"])
            for t in self.trace:
                w.writerow([t.cycle, t.stage_id, repr(t.abnormality_rate), repr(t.t2_limit), t.role])
        return path

    def table(self) -> str:
        """Stage summary laid out as name / number of stages / ranges."""
        ranges = ",".join(s.label() for s in self.stages)
        rows = [("Name", "No. of stages", "Range"), (self.dataset_name, str(len(self.stages)), ranges)]
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def _stage_range(model: StageModel, start: int, end: int) -> StageRange:
    return StageRange(start, end, model.basis.d, model.params.tau, model.params.r,
                      float(model.basis.objective_value), model.sync_length, model.monitor.R,
                      float(model.monitor.t2_limit), bool(model.basis.converged))


def divide_stages(dataset: BatteryDataset, config: SegmenterConfig = SegmenterConfig()) -> Segmentation:
    """Partition the cycles of ``dataset`` into degradation stages."""
    N = dataset.n_cycles
    if N < config.window:
        raise UsageError(f"dataset has {N} cycles, fewer than the training window {config.window}")

    stages: list[StageRange] = []
    trace: list[CycleTrace] = []
    flags: list[str] = []
    origin = 1
    while origin <= N:
        stage_id = len(stages) + 1
        train = dataset.cycles[origin - 1: origin - 1 + config.window]
        model = fit_stage(train, config)
        for c in train:
            s = model.score(c)
            trace.append(CycleTrace(c.cycle_index, stage_id, s.abnormality_rate, s.t2_limit, "train", "train"))

        state = StreamState(model, origin + config.window, config.alpha, config.consecutive_required)
        switch_at = None
        for c in dataset.cycles[origin - 1 + config.window:]:
            if switch_at is not None:
                # too few cycles left to train a new stage: keep scoring for the record
                s = model.score(c)
                trace.append(CycleTrace(c.cycle_index, stage_id, s.abnormality_rate, s.t2_limit,
                                        "test", "tail"))
                continue
            s, decision = score_stream(state, c)
            trace.append(CycleTrace(c.cycle_index, stage_id, s.abnormality_rate, s.t2_limit,
                                    "test", decision.value))
            if decision is Decision.SWITCH:
                start = state.pending_start
                if N - start + 1 >= config.window:
                    switch_at = start
                    break
                log.info("switch at cycle %d ignored: only %d cycles remain", start, N - start + 1)
                flags.append("short_tail")
                switch_at = -1

        if switch_at is None or switch_at == -1:
            stage = _stage_range(model, origin, N)
            if switch_at == -1:
                stage.flags.append("short_tail")
            stages.append(stage)
            break
        stages.append(_stage_range(model, origin, switch_at - 1))
        # cycles after the switch were scored under the old model; the new stage rescored them
        trace = [t for t in trace if t.cycle < switch_at]
        origin = switch_at

    if any(s.d for s in stages) and config.d is None:
        flags.append("d_reselected_per_stage")
    if config.psr.tau is None or config.psr.r is None:
        flags.append("psr_reselected_per_stage")
    seg = Segmentation(dataset.name, N, stages, trace, config.to_dict(), sorted(set(flags)))
    seg.check_partition()
    return seg
