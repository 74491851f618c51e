"""Stationary subspace analysis over synchronized cycles.

The cycles of a training window are treated as epochs.  After a pooled
whitening ``W``, an orthogonal rotation ``B`` is sought such that the first
``d`` rotated coordinates of every epoch are as close as possible to
``N(0, I)`` in Kullback-Leibler divergence.  The rotation is found by
conjugate gradient descent on the orthogonal group with random restarts,
and ``d`` is chosen as the largest count whose projected sources all pass
an augmented Dickey-Fuller test.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm, subspace_angles
from scipy.stats import ortho_group
from statsmodels.tsa.stattools import adfuller

from .errors import DegenerateInputError, DimensionError, DomainError, SingularityError, UsageError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EpochStats:
    """Sample mean and covariance of one epoch."""

    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class SSAConfig:
    n_restarts: int = 5
    max_iter: int = 500
    grad_tol: float = 1e-6
    seed: int = 42
    adf_alpha: float = 0.05
    ridge: float | None = None


@dataclass(frozen=True, eq=False)
class StationaryBasis:
    """Whitening and rotation that expose ``d`` stationary sources.

    ``projector`` is ``B[:d] @ W``; apply it to centered observations.
    """

    whitener: np.ndarray
    rotation: np.ndarray
    d: int
    objective_value: float
    center: np.ndarray
    converged: bool = True
    n_iter: int = 0
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def projector(self) -> np.ndarray:
        return self.rotation[: self.d] @ self.whitener

    @property
    def width(self) -> int:
        return self.whitener.shape[0]

    def to_dict(self) -> dict:
        return {
            "whitener": _mat_to_json(self.whitener),
            "rotation": _mat_to_json(self.rotation),
            "projector": _mat_to_json(self.projector),
            "center": _mat_to_json(self.center),
            "d": self.d,
            "objective_value": self.objective_value,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StationaryBasis":
        return cls(whitener=_mat_from_json(doc["whitener"]),
                   rotation=_mat_from_json(doc["rotation"]),
                   d=int(doc["d"]),
                   objective_value=float(doc["objective_value"]),
                   center=_mat_from_json(doc["center"]),
                   converged=bool(doc.get("converged", True)),
                   n_iter=int(doc.get("n_iter", 0)))


@dataclass(frozen=True, eq=False)
class InvariantSeries:
    cycle_index: int
    scores: np.ndarray


def _mat_to_json(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel(order="C")]}


def _mat_from_json(doc: dict) -> np.ndarray:
    return np.asarray(doc["data"], dtype=float).reshape(doc["shape"])


# ---------------------------------------------------------------------------
# whitening and epoch statistics

def pooled_whitener(cycles: Sequence[np.ndarray], ridge: float | None = None
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric inverse square root of the pooled covariance.

    Parameters
    ----------
    cycles : sequence of ndarray, shape (n_i, p)
        Epoch matrices; rows are samples.
    ridge : float, optional
        Diagonal loading added before inversion.  Defaults to
        ``1e-10 * trace(cov) / p``; pass 0 for an exact inverse.

    Returns
    -------
    W : ndarray, shape (p, p)
    center : ndarray, shape (p,)
        Pooled mean.
    """
    X = np.vstack([np.atleast_2d(np.asarray(c, dtype=float)) for c in cycles])
    if X.shape[0] < 2:
        raise UsageError("pooled_whitener needs at least 2 rows")
    center = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False))
    p = cov.shape[0]
    if ridge is None:
        ridge = 1e-10 * np.trace(cov) / p
    cov = cov + ridge * np.eye(p)
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() <= max(evals.max(), 1.0) * p * np.finfo(float).eps:
        raise SingularityError(f"pooled covariance is singular (smallest eigenvalue {evals.min():.3g})")
    W = (evecs / np.sqrt(evals)) @ evecs.T
    return (W + W.T) / 2, center


def epoch_stats(cycles: Sequence[np.ndarray], center=None) -> list[EpochStats]:
    """Mean and covariance of each epoch after subtracting ``center``."""
    out = []
    for c in cycles:
        X = np.atleast_2d(np.asarray(c, dtype=float))
        if center is not None:
            X = X - center
        if X.shape[0] < 2:
            raise UsageError("each epoch needs at least 2 rows")
        out.append(EpochStats(X.mean(axis=0), np.atleast_2d(np.cov(X, rowvar=False))))
    return out


# ---------------------------------------------------------------------------
# objective

def kld_to_standard_normal(mean, covariance) -> float:
    """KL divergence of ``N(mean, covariance)`` from ``N(0, I)``."""
    u = np.atleast_1d(np.asarray(mean, dtype=float))
    S = np.atleast_2d(np.asarray(covariance, dtype=float))
    if S.shape != (u.size, u.size):
        raise DimensionError(f"covariance shape {S.shape} does not match mean length {u.size}")
    if not np.allclose(S, S.T, rtol=1e-10, atol=1e-12):
        raise DomainError("covariance is not symmetric")
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise DomainError("covariance is not positive definite") from None
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return max(0.5 * (np.trace(S) - logdet + u @ u - u.size), 0.0)


class _Whitened:
    """Epoch moments in whitened coordinates, stacked for vectorized evaluation."""

    def __init__(self, epochs: Sequence[EpochStats], whitener: np.ndarray):
        if len(epochs) == 0:
            raise UsageError("need at least one epoch")
        W = np.asarray(whitener, dtype=float)
        self.means = np.stack([W @ e.mean for e in epochs])
        self.covs = np.stack([W @ e.covariance @ W.T for e in epochs])
        self.p = W.shape[0]

    def objective(self, B: np.ndarray, d: int) -> float:
        Bs = B[:d]
        m = self.means @ Bs.T
        S = np.einsum("ij,cjk,lk->cil", Bs, self.covs, Bs)
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise DomainError("projected epoch covariance is not positive definite") from None
        logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        tr = np.trace(S, axis1=1, axis2=2)
        return float(0.5 * np.sum(tr - logdet + np.einsum("ci,ci->c", m, m) - d))

    def gradient(self, B: np.ndarray, d: int) -> np.ndarray:
        """Euclidean gradient with respect to every entry of ``B``."""
        Bs = B[:d]
        m = self.means @ Bs.T
        BsC = np.einsum("ij,cjk->cik", Bs, self.covs)
        S = np.einsum("cik,lk->cil", BsC, Bs)
        Sinv = np.linalg.inv(S)
        G = np.zeros_like(B)
        G[:d] = (BsC - np.einsum("cij,cjk->cik", Sinv, BsC)).sum(axis=0) \
            + np.einsum("ci,cj->ij", m, self.means)
        return G


def ssa_objective(rotation, d: int, epochs: Sequence[EpochStats], whitener) -> float:
    """Sum over epochs of the KL divergence of the first ``d`` rotated coordinates from ``N(0, I)``."""
    B = np.asarray(rotation, dtype=float)
    _check_d(d, B.shape[0])
    return _Whitened(epochs, whitener).objective(B, d)


def ssa_gradient(rotation, d: int, epochs: Sequence[EpochStats], whitener) -> np.ndarray:
    """Euclidean gradient of :func:`ssa_objective` with respect to ``rotation``."""
    B = np.asarray(rotation, dtype=float)
    _check_d(d, B.shape[0])
    return _Whitened(epochs, whitener).gradient(B, d)


def _check_d(d, p):
    if not 1 <= d <= p:
        raise UsageError(f"d must lie in 1..{p}, got {d}")


# ---------------------------------------------------------------------------
# optimization on the orthogonal group

def _polar(B):
    U, _, Vt = np.linalg.svd(B)
    return U @ Vt


def _descend(ws: _Whitened, B: np.ndarray, d: int, max_iter: int, grad_tol: float):
    """Polak-Ribiere conjugate gradient along geodesics ``expm(t H) B``.

    Search directions live in the Lie algebra of skew matrices.  Steps are
    accepted only under the Armijo condition, so the objective never rises.
    """
    f = ws.objective(B, d)
    history = [f]
    H = prev_g = None
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        G = ws.gradient(B, d)
        g = G @ B.T - B @ G.T
        gnorm = np.linalg.norm(g)
        if gnorm < grad_tol:
            converged = True
            it -= 1
            break
        if H is None:
            H = -g
        else:
            beta = max(0.0, np.sum(g * (g - prev_g)) / np.sum(prev_g * prev_g))
            H = -g + beta * H
        slope = 0.5 * np.sum(g * H)
        if slope >= 0:
            H = -g
            slope = -0.5 * gnorm ** 2
        # initial trial step: a bounded rotation angle, then grow from the last accepted step
        t = min(2.0 * step, 0.5 / np.linalg.norm(H))
        accepted = False
        for _ in range(60):
            B_try = expm(t * H) @ B
            try:
                f_try = ws.objective(B_try, d)
            except DomainError:
                f_try = math.inf
            if f_try <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted or f - f_try <= 1e-15 * max(1.0, abs(f)):
            # no representable decrease left along this direction
            if accepted and f_try <= f:
                B, f = _polar(B_try), f_try
                history.append(f)
            converged = converged or gnorm < 1e3 * grad_tol
            break
        B = _polar(B_try)
        f = f_try
        history.append(f)
        step = t
        prev_g = g
    return B, f, history, converged, it


def random_rotation(p: int, rng: np.random.Generator) -> np.ndarray:
    if p == 1:
        return np.ones((1, 1))
    return ortho_group.rvs(p, random_state=rng)


def optimize_rotation(epochs: Sequence[EpochStats], whitener, d: int,
                      config: SSAConfig = SSAConfig(), center=None) -> StationaryBasis:
    """Find the rotation minimizing :func:`ssa_objective` for ``d`` stationary sources.

    Runs ``config.n_restarts`` descents from random orthogonal starting
    points and keeps the best.  With ``d`` equal to the full width the
    objective is rotation invariant and the identity is returned.
    """
    if len(epochs) < 2:
        raise UsageError("optimize_rotation needs at least 2 epochs")
    W = np.asarray(whitener, dtype=float)
    p = W.shape[0]
    _check_d(d, p)
    center = np.zeros(p) if center is None else np.asarray(center, dtype=float)
    ws = _Whitened(epochs, W)

    if d == p:
        B = np.eye(p)
        f = ws.objective(B, d)
        return StationaryBasis(W, B, d, f, center, True, 0, (f,))

    rng = np.random.default_rng(config.seed)
    best = None
    for k in range(max(1, config.n_restarts)):
        B0 = random_rotation(p, rng)
        B, f, hist, conv, n_it = _descend(ws, B0, d, config.max_iter, config.grad_tol)
        log.debug("restart %d: objective %.6g after %d iterations (converged=%s)", k, f, n_it, conv)
        if best is None or f < best[1]:
            best = (B, f, hist, conv, n_it)
    B, f, hist, conv, n_it = best
    if not conv:
        log.warning("rotation search did not converge in %d iterations (d=%d)", config.max_iter, d)
    return StationaryBasis(W, B, d, f, center, conv, n_it, tuple(hist))


# ---------------------------------------------------------------------------
# stationarity testing and source counting

class ADFResult(NamedTuple):
    stationary: bool
    statistic: float
    pvalue: float
    lags: int


def schwert_lags(n: int) -> int:
    return int(math.ceil(12.0 * (n / 100.0) ** 0.25))


def adf_is_stationary(series, alpha: float = 0.05) -> ADFResult:
    """Augmented Dickey-Fuller test with a constant and a fixed Schwert lag order.

    ``stationary`` is true when the unit-root null is rejected at ``alpha``
    using MacKinnon's approximate p-value.
    """
    x = np.asarray(series, dtype=float).ravel()
    if len(x) < 20:
        raise DegenerateInputError(f"ADF needs at least 20 samples, got {len(x)}")
    if np.ptp(x) == 0:
        raise DegenerateInputError("series is constant")
    lags = schwert_lags(len(x))
    stat, pvalue, *_ = adfuller(x, maxlag=lags, regression="c", autolag=None)
    return ADFResult(bool(pvalue < alpha), float(stat), float(pvalue), lags)


def project(basis: StationaryBasis, X: np.ndarray, center=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != basis.width:
        raise DimensionError(f"data width {X.shape[1]} does not match basis width {basis.width}")
    c = basis.center if center is None else np.asarray(center, dtype=float)
    return (X - c) @ basis.projector.T


def project_invariants(basis: StationaryBasis, cycle, center=None) -> InvariantSeries:
    """Map a cycle's embedded rows onto the stationary sources.

    ``cycle`` is an :class:`~stagewise.psr.EmbeddedCycle` or a bare matrix.
    """
    data = getattr(cycle, "data", cycle)
    index = getattr(cycle, "cycle_index", 0)
    return InvariantSeries(index, project(basis, data, center))


@dataclass(frozen=True, eq=False)
class DSelection:
    """Outcome of the source count search; ``d == 0`` when nothing passed."""

    d: int
    basis: StationaryBasis | None
    adf: dict[int, list[ADFResult]]


def _sources_pass(basis, cycles, alpha):
    scores = np.vstack([project(basis, c) for c in cycles])
    results = []
    for j in range(basis.d):
        try:
            results.append(adf_is_stationary(scores[:, j], alpha))
        except DegenerateInputError:
            results.append(ADFResult(False, math.nan, math.nan, 0))
            break
        if not results[-1].stationary:
            break
    return all(r.stationary for r in results) and len(results) == basis.d, results


def select_d(cycles: Sequence[np.ndarray], config: SSAConfig = SSAConfig(),
             whitener=None, center=None) -> DSelection:
    """Largest ``d`` whose optimized sources all pass the ADF test.

    Scans ``d`` downward from the full width.  Each candidate is optimized
    and its ``d`` source series, concatenated across cycles, are tested
    one by one at ``config.adf_alpha``.
    """
    cycles = [np.atleast_2d(np.asarray(c, dtype=float)) for c in cycles]
    if len(cycles) < 2:
        raise UsageError("select_d needs at least 2 epochs")
    if whitener is None or center is None:
        whitener, center = pooled_whitener(cycles, config.ridge)
    epochs = epoch_stats(cycles, center)
    p = whitener.shape[0]
    tried = {}
    for d in range(p, 0, -1):
        basis = optimize_rotation(epochs, whitener, d, config, center)
        ok, results = _sources_pass(basis, cycles, config.adf_alpha)
        tried[d] = results
        log.debug("d=%d: %s", d, "pass" if ok else "fail")
        if ok:
            return DSelection(d, basis, tried)
    return DSelection(0, None, tried)


def fit_stationary_basis(cycles: Sequence[np.ndarray], d: int | None = None,
                         config: SSAConfig = SSAConfig()) -> DSelection:
    """Whiten, then either optimize at a given ``d`` or search for it."""
    cycles = [np.atleast_2d(np.asarray(c, dtype=float)) for c in cycles]
    W, center = pooled_whitener(cycles, config.ridge)
    if d is None:
        return select_d(cycles, config, W, center)
    basis = optimize_rotation(epoch_stats(cycles, center), W, d, config, center)
    return DSelection(d, basis, {})


def subspace_angle_deg(a, b) -> float:
    """Largest principal angle, in degrees, between the row spaces of ``a`` and ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return float(np.degrees(subspace_angles(a.T, b.T).max()))
