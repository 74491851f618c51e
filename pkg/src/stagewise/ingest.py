"""Loading and validation of cycle-by-cycle discharge data.

A dataset is a list of discharge cycles, each holding ``J`` aligned variable
traces of its own length ``K_c``.  The canonical on-disk form is a long CSV
with one row per sample::

    cycle,time_s,voltage_v,current_a,temperature_c

Rows of different cycles may be interleaved in any order; they are grouped by
``cycle`` on load.  Within one cycle, rows must already be in increasing time
order, so a time reversal in the file is reported rather than silently
reordered.
"""
from __future__ import annotations

import csv
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IntegrityError, SchemaError, UsageError

#: Fixed downstream variable order.
VARIABLES = ("voltage", "current", "temperature")

#: Default mapping from logical field to CSV column.
DEFAULT_SCHEMA = {
    "cycle": "cycle",
    "time_s": "time_s",
    "voltage": "voltage_v",
    "current": "current_a",
    "temperature": "temperature_c",
}


@dataclass(frozen=True, eq=False)
class CycleRecord:
    """One discharge cycle.

    Parameters
    ----------
    cycle_index : int
        1-based cycle number.
    time_s : ndarray, shape (K,)
        Strictly increasing sample times in seconds.
    variables : mapping of str to ndarray, shape (K,)
        Variable traces in fixed order.
    """

    cycle_index: int
    time_s: np.ndarray
    variables: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.cycle_index) != self.cycle_index or self.cycle_index < 1:
            raise IntegrityError(f"cycle_index must be a positive integer, got {self.cycle_index!r}")
        t = np.asarray(self.time_s, dtype=float)
        if t.ndim != 1:
            raise IntegrityError("time_s must be one-dimensional")
        if len(t) < 2:
            raise IntegrityError(f"cycle {self.cycle_index} has {len(t)} samples; at least 2 required")
        if not np.all(np.isfinite(t)):
            raise IntegrityError(f"cycle {self.cycle_index}: missing or non-finite time values")
        if np.any(np.diff(t) <= 0):
            raise IntegrityError(f"cycle {self.cycle_index}: time_s is not strictly increasing")
        if not self.variables:
            raise IntegrityError(f"cycle {self.cycle_index} has no variables")
        vs = {}
        for name, v in self.variables.items():
            v = np.asarray(v, dtype=float)
            if v.shape != t.shape:
                raise IntegrityError(
                    f"cycle {self.cycle_index}: variable {name!r} has length {v.size}, expected {t.size}")
            if not np.all(np.isfinite(v)):
                raise IntegrityError(f"cycle {self.cycle_index}: missing values in {name!r}")
            v.setflags(write=False)
            vs[name] = v
        t.setflags(write=False)
        object.__setattr__(self, "cycle_index", int(self.cycle_index))
        object.__setattr__(self, "time_s", t)
        object.__setattr__(self, "variables", vs)

    @property
    def n_samples(self) -> int:
        return len(self.time_s)

    @property
    def variable_names(self) -> tuple[str, ...]:
        return tuple(self.variables)

    def matrix(self) -> np.ndarray:
        """Return the ``(K, J)`` sample matrix in variable order."""
        return np.column_stack([self.variables[n] for n in self.variables])

    def __eq__(self, other):
        if not isinstance(other, CycleRecord):
            return NotImplemented
        return (self.cycle_index == other.cycle_index
                and self.variable_names == other.variable_names
                and np.array_equal(self.time_s, other.time_s)
                and all(np.array_equal(self.variables[n], other.variables[n])
                        for n in self.variables))


@dataclass(frozen=True)
class BatteryDataset:
    """An ordered collection of discharge cycles for one cell."""

    name: str
    rated_capacity_ah: float
    cycles: tuple[CycleRecord, ...]

    def __post_init__(self):
        if not self.rated_capacity_ah > 0:
            raise IntegrityError("rated_capacity_ah must be positive")
        cycles = tuple(sorted(self.cycles, key=lambda c: c.cycle_index))
        if not cycles:
            raise IntegrityError("dataset has no cycles")
        idx = [c.cycle_index for c in cycles]
        if len(set(idx)) != len(idx):
            raise IntegrityError("duplicate cycle indices")
        if idx != list(range(1, len(idx) + 1)):
            raise IntegrityError(f"cycle indices must be contiguous from 1, got {idx[0]}..{idx[-1]} "
                                 f"with {len(idx)} cycles")
        names = cycles[0].variable_names
        for c in cycles:
            if c.variable_names != names:
                raise IntegrityError(f"cycle {c.cycle_index} has variables {c.variable_names}, "
                                     f"expected {names}")
        object.__setattr__(self, "cycles", cycles)

    def __len__(self):
        return len(self.cycles)

    @property
    def n_cycles(self) -> int:
        return len(self.cycles)

    @property
    def variable_names(self) -> tuple[str, ...]:
        return self.cycles[0].variable_names

    def cycle(self, index: int) -> CycleRecord:
        """Return the cycle with 1-based ``index``."""
        return self.cycles[index - 1]


def _schema_for(names: Sequence[str]) -> dict[str, str]:
    schema = {"cycle": DEFAULT_SCHEMA["cycle"], "time_s": DEFAULT_SCHEMA["time_s"]}
    for n in names:
        schema[n] = DEFAULT_SCHEMA.get(n, n)
    return schema


def load_dataset(path, schema: Mapping[str, str] | None = None, *,
                 name: str | None = None, rated_capacity_ah: float = 2.0) -> BatteryDataset:
    """Read a long-format CSV into a validated :class:`BatteryDataset`.

    ``schema`` maps the logical fields ``cycle`` and ``time_s`` plus one entry
    per variable to CSV column names; variable order follows the mapping.
    Defaults to :data:`DEFAULT_SCHEMA`.
    """
    path = Path(path)
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    for key in ("cycle", "time_s"):
        if key not in schema:
            raise SchemaError(f"schema lacks required field {key!r}")
    var_fields = [k for k in schema if k not in ("cycle", "time_s")]
    if not var_fields:
        raise SchemaError("schema maps no variables")

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [col for col in schema.values() if col not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        pos = {k: header.index(col) for k, col in schema.items()}

        groups: dict[int, list[tuple[float, list[float]]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            try:
                raw_cycle = row[pos["cycle"]].strip()
                cyc = float(raw_cycle)
                t = float(row[pos["time_s"]])
                vals = [float(row[pos[k]]) for k in var_fields]
            except (ValueError, IndexError):
                raise IntegrityError(f"{path}:{lineno}: missing or malformed value") from None
            if not math.isfinite(cyc) or cyc != int(cyc):
                raise IntegrityError(f"{path}:{lineno}: cycle must be an integer, got {raw_cycle!r}")
            if not math.isfinite(t) or not all(math.isfinite(v) for v in vals):
                raise IntegrityError(f"{path}:{lineno}: missing or non-finite value")
            groups.setdefault(int(cyc), []).append((t, vals))

    if not groups:
        raise SchemaError(f"{path}: no data rows")

    cycles = []
    for cyc in sorted(groups):
        rows = groups[cyc]
        if len(rows) < 2:
            raise IntegrityError(f"cycle {cyc} has {len(rows)} sample(s); at least 2 required")
        t = np.array([r[0] for r in rows])
        vals = np.array([r[1] for r in rows])
        cycles.append(CycleRecord(cyc, t, {k: vals[:, j] for j, k in enumerate(var_fields)}))
    return BatteryDataset(name or path.stem, rated_capacity_ah, tuple(cycles))


def write_csv(dataset: BatteryDataset, path, schema: Mapping[str, str] | None = None) -> Path:
    """Serialize ``dataset`` in the long CSV form read by :func:`load_dataset`.

    Floats are written with ``repr`` so a write/load round trip is exact.
    """
    path = Path(path)
    schema = dict(schema) if schema is not None else _schema_for(dataset.variable_names)
    names = dataset.variable_names
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([schema["cycle"], schema["time_s"], *(schema[n] for n in names)])
        for c in dataset.cycles:
            cols = [c.variables[n] for n in names]
            for k in range(c.n_samples):
                w.writerow([c.cycle_index, repr(float(c.time_s[k])),
                            *(repr(float(col[k])) for col in cols)])
    return path


def truncate_to_min_length(cycles: Sequence[np.ndarray]) -> tuple[list[np.ndarray], int]:
    """Cut every matrix to the shortest row count among them.

    Returns the truncated matrices and the common length ``M``.
    """
    if len(cycles) == 0:
        raise UsageError("truncate_to_min_length needs at least one matrix")
    mats = [np.asarray(c) for c in cycles]
    if any(m.ndim == 0 or m.shape[0] < 1 for m in mats):
        raise UsageError("every matrix needs at least one row")
    m = min(x.shape[0] for x in mats)
    return [x[:m] for x in mats], m
