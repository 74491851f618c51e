"""Normal-region model on training invariants and per-cycle scoring.

A PCA of the concatenated training invariants keeps the leading ``R``
components that explain ``variance_target`` of the variance.  New samples
are scored with Hotelling's T² on the retained scores and compared to an
F-distribution control limit; a cycle's abnormality rate is the fraction of
its samples above the limit.
"""
from __future__ import annotations

import csv
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import DimensionError, SingularityError, UsageError
from .ssa import _mat_from_json, _mat_to_json

LIMIT_FORM = "R(N-1)(N+1)/(N(N-R)) * F(R, N-R; 1-alpha)"


def hotelling_t2_limit(R: int, n: int, alpha: float) -> float:
    """Upper control limit of T² for a new observation.

    ``R (n - 1)(n + 1) / (n (n - R)) * F_{R, n - R}(1 - alpha)``
    """
    if not 0 < alpha < 1:
        raise UsageError(f"alpha must lie in (0, 1), got {alpha}")
    if R < 1 or n <= R:
        raise UsageError(f"need 1 <= R < n, got R={R}, n={n}")
    coef = R * (n - 1) * (n + 1) / (n * (n - R))
    return float(coef * stats.f.ppf(1.0 - alpha, R, n - R))


@dataclass(frozen=True, eq=False)
class MonitoringModel:
    loadings: np.ndarray
    score_cov: np.ndarray
    t2_limit: float
    R: int
    alpha: float
    n_train: int
    center: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def d(self) -> int:
        return self.loadings.shape[1]

    def to_dict(self) -> dict:
        return {
            "loadings": _mat_to_json(self.loadings),
            "score_cov": _mat_to_json(self.score_cov),
            "center": _mat_to_json(self.center),
            "explained_variance_ratio": [float(x) for x in self.explained_variance_ratio],
            "t2_limit": self.t2_limit,
            "R": self.R,
            "alpha": self.alpha,
            "n_train": self.n_train,
            "limit_form": LIMIT_FORM,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MonitoringModel":
        return cls(_mat_from_json(doc["loadings"]), _mat_from_json(doc["score_cov"]),
                   float(doc["t2_limit"]), int(doc["R"]), float(doc["alpha"]),
                   int(doc["n_train"]), _mat_from_json(doc["center"]),
                   np.asarray(doc["explained_variance_ratio"], dtype=float))


@dataclass(frozen=True, eq=False)
class CycleScore:
    cycle_index: int
    t2: np.ndarray
    abnormality_rate: float
    t2_limit: float


def _as_matrix(invariants) -> np.ndarray:
    data = getattr(invariants, "scores", invariants)
    if isinstance(data, (list, tuple)):
        data = np.vstack([getattr(x, "scores", x) for x in data])
    return np.atleast_2d(np.asarray(data, dtype=float))


def fit_monitor(training_invariants, variance_target: float = 0.85,
                alpha: float = 0.05) -> MonitoringModel:
    """PCA + T² limit on training invariants.

    ``training_invariants`` is an ``(N_C, d)`` matrix, an
    :class:`~stagewise.ssa.InvariantSeries`, or a list of either (concatenated).
    """
    T = _as_matrix(training_invariants)
    n, d = T.shape
    if not 0 < variance_target <= 1:
        raise UsageError(f"variance_target must lie in (0, 1], got {variance_target}")
    if n < d + 2:
        raise UsageError(f"need at least d + 2 = {d + 2} training samples, got {n}")
    center = T.mean(axis=0)
    Tc = T - center
    evals, evecs = np.linalg.eigh(np.atleast_2d(np.cov(Tc, rowvar=False)))
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    total = evals.sum()
    if not total > 0:
        raise SingularityError("training invariants have zero variance")
    ratio = np.clip(evals, 0, None) / total
    # small slack so a target of exactly 1.0 is reachable despite round-off
    R = int(np.searchsorted(np.cumsum(ratio), variance_target - 1e-12) + 1)
    R = min(R, d)
    P = evecs[:, :R].T
    scores = Tc @ P.T
    cov = np.atleast_2d(np.cov(scores, rowvar=False))
    w = np.linalg.eigvalsh(cov)
    if w.min() <= w.max() * 1e-12:
        raise SingularityError("retained score covariance is singular")
    return MonitoringModel(P, cov, hotelling_t2_limit(R, n, alpha), R, alpha, n, center, ratio)


def t2_statistics(model: MonitoringModel, invariants) -> np.ndarray:
    T = _as_matrix(invariants)
    if T.shape[1] != model.d:
        raise DimensionError(f"invariant width {T.shape[1]} does not match model width {model.d}")
    Z = (T - model.center) @ model.loadings.T
    sol = np.linalg.solve(model.score_cov, Z.T).T
    return np.maximum(np.einsum("ij,ij->i", Z, sol), 0.0)


def score_cycle(model: MonitoringModel, invariants, cycle_index: int | None = None) -> CycleScore:
    """Per-sample T² and the fraction of samples above the control limit."""
    t2 = t2_statistics(model, invariants)
    if cycle_index is None:
        cycle_index = getattr(invariants, "cycle_index", 0)
    ar = float(np.mean(t2 > model.t2_limit)) if t2.size else 0.0
    return CycleScore(cycle_index, t2, ar, model.t2_limit)


def write_t2_csv(scores: Iterable[CycleScore], path) -> Path:
    """Long-form trace ``cycle,k,t2,limit`` for plotting (``k`` is 1-based)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cycle", "k", "t2", "limit"])
        for s in scores:
            for k, v in enumerate(s.t2, start=1):
                w.writerow([s.cycle_index, k, repr(float(v)), repr(float(s.t2_limit))])
    return path
