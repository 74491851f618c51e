"""Synthetic cycling data with a known stationary subspace and known change cycles.

Sources per cycle:

* ``d_true`` stationary AR(1) processes with coefficient ``ar_coef`` and unit
  innovation variance, restarted from their stationary law in every cycle;
* ``n_nonstationary`` Gaussian white sources whose variance (and optionally
  mean) is set by the regime the cycle falls in.  Regime ``s`` (0-based)
  defaults to variance ``(s + 1)**2``.

Observations are ``mixing @ sources`` plus isotropic sensor noise.
"""
from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import ortho_group

from .errors import UsageError
from .ingest import VARIABLES, BatteryDataset, CycleRecord


@dataclass(frozen=True)
class SynthSpec:
    n_cycles: int = 80
    samples_per_cycle: int = 200
    d_true: int = 1
    n_nonstationary: int = 2
    change_cycles: tuple[int, ...] = ()
    mixing: np.ndarray | None = field(default=None, compare=False)
    noise_sigma: float = 0.1
    ar_coef: float = 0.6
    variance_scales: tuple[float, ...] | None = None
    mean_shifts: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "change_cycles", tuple(int(c) for c in self.change_cycles))
        if self.n_cycles < 1 or self.samples_per_cycle < 2:
            raise UsageError("need n_cycles >= 1 and samples_per_cycle >= 2")
        if self.d_true < 0 or self.n_nonstationary < 0 or self.n_sources < 1:
            raise UsageError("source counts must be non-negative with at least one source")
        ch = self.change_cycles
        if any(b <= a for a, b in zip(ch, ch[1:])):
            raise UsageError(f"change_cycles must be strictly increasing, got {ch}")
        if ch and not (1 < ch[0] and ch[-1] < self.n_cycles):
            raise UsageError(f"change cycles must lie strictly between 1 and {self.n_cycles}, got {ch}")
        if not abs(self.ar_coef) < 1:
            raise UsageError("ar_coef must lie in (-1, 1)")
        if self.noise_sigma < 0:
            raise UsageError("noise_sigma must be non-negative")
        n_seg = len(ch) + 1
        for name in ("variance_scales", "mean_shifts"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(float(x) for x in v)
                if len(v) != n_seg:
                    raise UsageError(f"{name} needs {n_seg} entries (one per regime), got {len(v)}")
                object.__setattr__(self, name, v)
        if self.variance_scales is not None and min(self.variance_scales) <= 0:
            raise UsageError("variance_scales must be positive")
        if self.mixing is not None:
            m = np.asarray(self.mixing, dtype=float)
            if m.shape != (self.n_sources, self.n_sources):
                raise UsageError(f"mixing must be {self.n_sources}x{self.n_sources}")
            if np.linalg.cond(m) > 1e12:
                raise UsageError("mixing matrix is singular")
            object.__setattr__(self, "mixing", m)

    @property
    def n_sources(self) -> int:
        return self.d_true + self.n_nonstationary

    @property
    def n_segments(self) -> int:
        return len(self.change_cycles) + 1

    def regime(self, cycle_index: int) -> int:
        """0-based regime of a 1-based cycle."""
        return int(np.searchsorted(self.change_cycles, cycle_index, side="right"))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    mixing: np.ndarray
    d_true: int
    change_cycles: tuple[int, ...]
    regimes: tuple[int, ...]

    @property
    def stationary_rows(self) -> np.ndarray:
        """Rows of the demixing matrix that extract the stationary sources (``d_true x n``)."""
        return np.linalg.inv(self.mixing)[: self.d_true]

    @property
    def stages(self) -> list[tuple[int, int]]:
        bounds = [1, *self.change_cycles, len(self.regimes) + 1]
        return [(a, b - 1) for a, b in zip(bounds, bounds[1:])]

    def to_dict(self) -> dict:
        return {
            "mixing": self.mixing.tolist(),
            "d_true": self.d_true,
            "change_cycles": list(self.change_cycles),
            "stages": [list(s) for s in self.stages],
            "stationary_rows": self.stationary_rows.tolist(),
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def variable_names(n: int) -> tuple[str, ...]:
    """Canonical battery names for three channels, ``x1..xn`` otherwise."""
    return VARIABLES if n == len(VARIABLES) else tuple(f"x{i + 1}" for i in range(n))


def generate(spec: SynthSpec, seed: int = 0, name: str = "synthetic"
             ) -> tuple[BatteryDataset, GroundTruth]:
    """Draw a dataset from ``spec``; identical seeds give identical data."""
    rng = np.random.default_rng(seed)
    n = spec.n_sources
    if spec.mixing is not None:
        A = spec.mixing
    elif n == 1:
        A = np.ones((1, 1))
    else:
        A = ortho_group.rvs(n, random_state=rng)

    scales = spec.variance_scales or tuple(float((s + 1) ** 2) for s in range(spec.n_segments))
    shifts = spec.mean_shifts or (0.0,) * spec.n_segments
    phi = spec.ar_coef
    K = spec.samples_per_cycle
    names = variable_names(n)
    t = np.arange(K, dtype=float)

    cycles, regimes = [], []
    for c in range(1, spec.n_cycles + 1):
        g = spec.regime(c)
        regimes.append(g)
        S = np.empty((K, n))
        if spec.d_true:
            e = rng.standard_normal((K, spec.d_true))
            x = np.empty_like(e)
            x[0] = e[0] / np.sqrt(1 - phi ** 2)
            for k in range(1, K):
                x[k] = phi * x[k - 1] + e[k]
            S[:, : spec.d_true] = x
        if spec.n_nonstationary:
            S[:, spec.d_true:] = shifts[g] + np.sqrt(scales[g]) * rng.standard_normal((K, spec.n_nonstationary))
        X = S @ A.T + spec.noise_sigma * rng.standard_normal((K, n))
        cycles.append(CycleRecord(c, t, {nm: X[:, j] for j, nm in enumerate(names)}))

    ds = BatteryDataset(name, 2.0, tuple(cycles))
    return ds, GroundTruth(A, spec.d_true, spec.change_cycles, tuple(regimes))


def epoch_ramp_spec(n_cycles: int, samples_per_cycle: int, d_true: int, n_nonstationary: int,
                    **kw) -> SynthSpec:
    """Every cycle (but the last, which shares its regime with the one before) is its own regime.

    With the default schedule the non-stationary variance climbs as
    ``1, 4, 9, ...`` from epoch to epoch.
    """
    changes = tuple(range(2, n_cycles))
    return SynthSpec(n_cycles=n_cycles, samples_per_cycle=samples_per_cycle, d_true=d_true,
                     n_nonstationary=n_nonstationary, change_cycles=changes, **kw)


def epochs_of(dataset: BatteryDataset) -> list[np.ndarray]:
    """Raw ``(K, J)`` matrices of every cycle, without embedding."""
    return [c.matrix() for c in dataset.cycles]


def recovery_angles(dims: Sequence[tuple[int, int]], seeds: Sequence[int], n_cycles: int = 15,
                    samples_per_cycle: int = 500, config=None) -> list[float]:
    """Largest principal angle between recovered and true stationary subspaces, per seed.

    ``dims`` is cycled through as ``(d_true, n_nonstationary)`` pairs.
    """
    from .ssa import SSAConfig, fit_stationary_basis, subspace_angle_deg

    config = config or SSAConfig()
    out = []
    for i, seed in enumerate(seeds):
        d, ns = dims[i % len(dims)]
        ds, truth = generate(epoch_ramp_spec(n_cycles, samples_per_cycle, d, ns), seed)
        sel = fit_stationary_basis(epochs_of(ds), d=d, config=config)
        out.append(subspace_angle_deg(sel.basis.projector, truth.stationary_rows))
    return out
