"""Delay embedding of discharge traces in phase space.

Each scalar trace is unfolded into an ``r``-dimensional trajectory with lag
``tau``.  The lag comes from the first minimum of the average mutual
information (histogram estimator), the dimension from the false nearest
neighbour fraction.  Per-variable embeddings are merged with a common
``(max tau, max r)`` so every variable contributes ``r`` columns.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from statistics import median_high

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateInputError, DimensionError, UsageError
from .ingest import CycleRecord


@dataclass(frozen=True)
class EmbeddingParams:
    tau: int
    r: int

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise UsageError(f"tau must be a positive integer, got {self.tau!r}")
        if int(self.r) != self.r or self.r < 1:
            raise UsageError(f"r must be a positive integer, got {self.r!r}")
        object.__setattr__(self, "tau", int(self.tau))
        object.__setattr__(self, "r", int(self.r))

    @property
    def span(self) -> int:
        """Samples consumed beyond the first row, ``(r - 1) * tau``."""
        return (self.r - 1) * self.tau


@dataclass(frozen=True)
class PSRConfig:
    """Estimator settings for lag and dimension selection.

    ``tau`` and ``r`` pin the parameters instead of estimating them.
    """

    max_lag: int = 50
    bins: int = 16
    max_r: int = 10
    rtol: float = 15.0
    atol: float = 2.0
    fnn_tol: float = 0.01
    tau: int | None = None
    r: int | None = None


@dataclass(frozen=True, eq=False)
class EmbeddedCycle:
    cycle_index: int
    data: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def embed(series, params: EmbeddingParams) -> np.ndarray:
    """Delay-embed ``series``: row ``k`` is ``[v_k, v_{k+tau}, ..., v_{k+(r-1)tau}]``."""
    v = np.asarray(series, dtype=float).ravel()
    n = len(v) - params.span
    if n < 1:
        raise DimensionError(
            f"series of length {len(v)} too short for tau={params.tau}, r={params.r} "
            f"(needs >= {params.span + 1})")
    return np.column_stack([v[j * params.tau: j * params.tau + n] for j in range(params.r)])


def _check_informative(v: np.ndarray):
    if v.size == 0 or np.ptp(v) == 0:
        raise DegenerateInputError("series is constant")


def average_mutual_information(series, max_lag: int, bins: int = 16) -> np.ndarray:
    """AMI between the series and its lagged copy for lags ``1..max_lag`` (nats).

    Both copies are binned on the same equal-width grid spanning the full
    series range.
    """
    v = np.asarray(series, dtype=float).ravel()
    _check_informative(v)
    if max_lag < 1 or len(v) <= max_lag:
        raise DimensionError(f"max_lag={max_lag} needs a series longer than {max_lag}")
    lo, hi = v.min(), v.max()
    idx = np.minimum(((v - lo) / (hi - lo) * bins).astype(int), bins - 1)
    out = np.empty(max_lag)
    for lag in range(1, max_lag + 1):
        a, b = idx[:-lag], idx[lag:]
        joint = np.bincount(a * bins + b, minlength=bins * bins).reshape(bins, bins) / len(a)
        pa, pb = joint.sum(axis=1), joint.sum(axis=0)
        nz = joint > 0
        out[lag - 1] = np.sum(joint[nz] * np.log(joint[nz] / np.outer(pa, pb)[nz]))
    return out


def first_local_minimum(values) -> int:
    """1-based position of the first local minimum of ``values``.

    Position 1 qualifies when it does not exceed position 2.  Without any
    local minimum, the position of the smallest value (earliest on ties).
    """
    x = np.asarray(values, dtype=float)
    n = len(x)
    for i in range(n - 1):
        if (i == 0 or x[i] < x[i - 1]) and x[i] <= x[i + 1]:
            return i + 1
    return int(np.argmin(x)) + 1


def select_tau(series, max_lag: int = 50, bins: int = 16) -> int:
    """Embedding lag at the first minimum of the average mutual information."""
    v = np.asarray(series, dtype=float).ravel()
    _check_informative(v)
    if len(v) < 2 * max_lag:
        raise DimensionError(f"select_tau needs at least {2 * max_lag} samples, got {len(v)}")
    return first_local_minimum(average_mutual_information(v, max_lag, bins))


def false_nearest_fraction(series, tau: int, m: int, rtol: float = 15.0,
                           atol: float = 2.0) -> float:
    """Fraction of nearest neighbours in dimension ``m`` that separate in ``m + 1``.

    A neighbour pair is false when the added coordinate stretches the pair
    distance by more than ``rtol``, or when the ``m + 1`` distance exceeds
    ``atol`` times the series standard deviation.
    """
    v = np.asarray(series, dtype=float).ravel()
    _check_informative(v)
    n = len(v) - m * tau
    if n < 2:
        raise DimensionError(f"series too short to test dimension {m} at tau={tau}")
    emb = embed(v[: n + (m - 1) * tau], EmbeddingParams(tau, m))
    nxt = v[m * tau: m * tau + n]
    ra = v.std()
    eps = 1e-9 * ra

    dist, ind = cKDTree(emb).query(emb, k=2)
    # with exact duplicates the point itself may come back second
    self_first = ind[:, 0] == np.arange(n)
    nn = np.where(self_first, ind[:, 1], ind[:, 0])
    d = np.where(self_first, dist[:, 1], dist[:, 0])

    ext = np.abs(nxt - nxt[nn])
    with np.errstate(divide="ignore", invalid="ignore"):
        stretched = np.where(d > eps, ext / d > rtol, ext > eps)
    lonely = np.sqrt(d ** 2 + ext ** 2) / ra > atol
    return float(np.mean(stretched | lonely))


def select_r(series, tau: int, max_r: int = 10, rtol: float = 15.0, atol: float = 2.0,
             fnn_tol: float = 0.01) -> int:
    """Smallest dimension whose false-neighbour fraction is below ``fnn_tol``."""
    v = np.asarray(series, dtype=float).ravel()
    _check_informative(v)
    if tau < 1:
        raise UsageError("tau must be >= 1")
    if len(v) - max_r * tau < 2:
        raise DimensionError(f"series of length {len(v)} too short for max_r={max_r} at tau={tau}")
    for m in range(1, max_r):
        if false_nearest_fraction(v, tau, m, rtol, atol) < fnn_tol:
            return m
    return max_r


def select_params(traces: Sequence, config: PSRConfig = PSRConfig()) -> EmbeddingParams:
    """Choose ``(tau, r)`` for one variable from the traces of a training window.

    Each trace is analysed separately; the upper median over traces is
    taken.  Search bounds are shrunk to what the shortest trace supports.
    """
    if len(traces) == 0:
        raise UsageError("select_params needs at least one trace")
    if config.tau is not None and config.r is not None:
        return EmbeddingParams(config.tau, config.r)
    traces = [np.asarray(t, dtype=float).ravel() for t in traces]
    shortest = min(len(t) for t in traces)

    if config.tau is not None:
        tau = config.tau
    else:
        max_lag = min(config.max_lag, shortest // 2)
        if max_lag < 1:
            raise DimensionError(f"traces of length {shortest} are too short to select tau")
        tau = median_high(select_tau(t, max_lag, config.bins) for t in traces)

    if config.r is not None:
        r = config.r
    else:
        max_r = min(config.max_r, (shortest - 2) // tau)
        if max_r < 1:
            raise DimensionError(f"traces of length {shortest} are too short to embed at tau={tau}")
        r = median_high(select_r(t, tau, max_r, config.rtol, config.atol, config.fnn_tol)
                        for t in traces)
    return EmbeddingParams(tau, r)


def merge_params(params: Sequence[EmbeddingParams]) -> EmbeddingParams:
    """Common parameters for all variables: the largest lag and the largest dimension."""
    if len(params) == 0:
        raise UsageError("merge_params needs at least one EmbeddingParams")
    return EmbeddingParams(max(p.tau for p in params), max(p.r for p in params))


def embed_multivariate(cycle: CycleRecord,
                       params_per_variable: Sequence[EmbeddingParams] | EmbeddingParams
                       ) -> EmbeddedCycle:
    """Embed every variable of ``cycle`` with merged parameters and stack columns.

    Output columns are grouped by variable in the cycle's variable order:
    ``[V_1 | V_2 | ... | V_J]``, each block ``r`` wide.
    """
    names = cycle.variable_names
    if isinstance(params_per_variable, EmbeddingParams):
        merged = params_per_variable
    else:
        if len(params_per_variable) != len(names):
            raise UsageError(f"got {len(params_per_variable)} parameter sets for {len(names)} variables")
        merged = merge_params(params_per_variable)
    blocks = [embed(cycle.variables[n], merged) for n in names]
    rows = min(b.shape[0] for b in blocks)
    return EmbeddedCycle(cycle.cycle_index, np.hstack([b[:rows] for b in blocks]))
