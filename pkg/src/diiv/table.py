"""Rectangular observation table for two-instrument designs.

A table is in one of two layouts:

* ``joint``: both instruments ``z1`` and ``z2`` are observed for every unit.
* ``parallel``: the population is split by a frame indicator ``h`` (``h=1`` for
  the first frame).  ``z1`` then holds the within-frame assignment.  If ``z2``
  is also present, frame-2 rows read their assignment from ``z2`` instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Mapping

import numpy as np

from .errors import NonBinary, SchemaError

Mode = Literal["parallel", "joint"]


def as_binary(values, name: str = "column") -> np.ndarray:
    """Return ``values`` as an int8 array, raising NonBinary on anything but 0/1."""
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise SchemaError(f"{name} must be one-dimensional")
    if arr.dtype == bool:
        return arr.astype(np.int8)
    with np.errstate(invalid="ignore"):
        ok = (arr == 0) | (arr == 1)
    if not np.all(ok):
        raise NonBinary(f"{name} contains values other than 0 and 1")
    return arr.astype(np.int8)


def _as_real(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise SchemaError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{name} has missing or non-finite entries")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ObservationTable:
    y: np.ndarray
    d: np.ndarray
    z1: np.ndarray
    z2: np.ndarray | None = None
    h: np.ndarray | None = None
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        y = _as_real(self.y, "y")
        n = y.shape[0]
        if n < 1:
            raise SchemaError("table has no rows")
        cols = {"y": y, "d": as_binary(self.d, "d"), "z1": as_binary(self.z1, "z1")}
        if self.z2 is not None:
            cols["z2"] = as_binary(self.z2, "z2")
        if self.h is not None:
            cols["h"] = as_binary(self.h, "h")
        if self.z2 is None and self.h is None:
            raise SchemaError("table needs z2 (joint design) or h (parallel design)")
        covs = {str(k): _as_real(v, k) for k, v in dict(self.covariates).items()}
        for name, col in list(cols.items()) + list(covs.items()):
            if col.shape[0] != n:
                raise SchemaError(f"column {name} has {col.shape[0]} rows, expected {n}")
        for name, col in cols.items():
            object.__setattr__(self, name, _frozen(col))
        object.__setattr__(self, "covariates", {k: _frozen(v) for k, v in covs.items()})

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def default_mode(self) -> Mode:
        return "joint" if self.z2 is not None else "parallel"

    def resolve_mode(self, mode: Mode | None = None) -> Mode:
        mode = mode or self.default_mode
        if mode == "parallel" and self.h is None:
            raise SchemaError("parallel design requires column h")
        if mode == "joint" and self.z2 is None:
            raise SchemaError("joint design requires column z2")
        if mode not in ("parallel", "joint"):
            raise ValueError(f"unknown design mode {mode!r}")
        return mode

    def assignment(self) -> np.ndarray:
        """Within-frame assignment for the parallel layout."""
        if self.h is None:
            raise SchemaError("parallel design requires column h")
        if self.z2 is None:
            return self.z1
        return np.where(self.h == 1, self.z1, self.z2).astype(np.int8)

    def covariate_matrix(self, names) -> np.ndarray:
        names = list(names or ())
        missing = [c for c in names if c not in self.covariates]
        if missing:
            raise SchemaError(f"missing column: {missing[0]}")
        if not names:
            return np.empty((self.n, 0))
        return np.column_stack([self.covariates[c] for c in names])

    def take(self, rows) -> "ObservationTable":
        """Subset or reorder rows."""
        rows = np.asarray(rows)
        return ObservationTable(
            y=self.y[rows],
            d=self.d[rows],
            z1=self.z1[rows],
            z2=None if self.z2 is None else self.z2[rows],
            h=None if self.h is None else self.h[rows],
            covariates={k: v[rows] for k, v in self.covariates.items()},
        )

    def replace(self, **columns) -> "ObservationTable":
        fields = dict(y=self.y, d=self.d, z1=self.z1, z2=self.z2, h=self.h,
                      covariates=self.covariates)
        fields.update(columns)
        return ObservationTable(**fields)
