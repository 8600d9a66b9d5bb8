"""File formats: observation CSVs, flat run-config files, key/value reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import SchemaError
from .estimand import DirectedDesign
from .microsim import PRESETS, EnvironmentConfig, ResponseSpec, TypeProfile
from .table import ObservationTable


class ConfigError(ValueError):
    pass


def fmt(value: Any) -> str:
    """Serialize a scalar; floats use the shortest repr that round-trips."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return ",".join(fmt(v) for v in value)
    return str(value)


def format_kv(items: Iterable[tuple[str, Any]]) -> str:
    return "".join(f"{k} = {fmt(v)}\n" for k, v in items)


def _json_safe(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, Mapping):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def dump_json(data: Mapping[str, Any]) -> str:
    return json.dumps(_json_safe(dict(data)), indent=2, allow_nan=False) + "\n"


# --- observation CSV -------------------------------------------------------

def read_table(path: str | Path, design: str | None = None, covariates=()) -> ObservationTable:
    """Load an observation table from a headed, comma-separated file.

    Required columns are ``y``, ``d`` and ``z1``, plus ``z2`` for the joint
    design or ``h`` for the parallel design.  Without ``design`` the layout is
    inferred: ``z2`` present means joint.  Other columns are read only when
    listed in ``covariates``.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = [c.strip() for c in next(reader)]
            rows = [r for r in reader if r and any(c.strip() for c in r)]
    except FileNotFoundError:
        raise SchemaError(f"no such file: {path}") from None
    except StopIteration:
        raise SchemaError("file is empty") from None
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names in header")
    if design is None:
        design = "joint" if "z2" in header else "parallel"
    required = ["y", "d", "z1", "z2" if design == "joint" else "h"]
    optional = ["z2"] if design == "parallel" and "z2" in header and "h" in header else []
    for col in required + list(covariates):
        if col not in header:
            raise SchemaError(f"missing column: {col}")
    if not rows:
        raise SchemaError("file has no data rows")
    index = {c: i for i, c in enumerate(header)}

    def column(name: str) -> np.ndarray:
        i = index[name]
        out = np.empty(len(rows))
        for r, row in enumerate(rows):
            if len(row) != len(header):
                raise SchemaError(f"row {r + 2} has {len(row)} fields, expected {len(header)}")
            cell = row[i].strip()
            try:
                out[r] = float(cell)
            except ValueError:
                raise SchemaError(f"column {name}, row {r + 2}: not a number: {cell!r}") from None
        return out

    cols = {c: column(c) for c in required + optional}
    return ObservationTable(
        y=cols["y"],
        d=cols["d"],
        z1=cols["z1"],
        z2=cols.get("z2"),
        h=cols.get("h"),
        covariates={c: column(c) for c in covariates},
    )


def write_table(table: ObservationTable, path: str | Path) -> None:
    names = ["y", "d", "z1"]
    cols = [table.y, table.d, table.z1]
    for name in ("z2", "h"):
        col = getattr(table, name)
        if col is not None:
            names.append(name)
            cols.append(col)
    for name, col in table.covariates.items():
        names.append(name)
        cols.append(col)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(fmt(v) for v in row) + "\n")


# --- run configuration -----------------------------------------------------

_SHARES = ("pi_A", "pi_N", "pi_C", "pi_F")
_EFFECTS = ("tau_A", "tau_N", "tau_C", "tau_F")
_KAPPA = ("C1", "C2", "F1", "F2")
_PRESET_OWNED = (
    {f"shares.{k}" for k in _SHARES}
    | {f"effects.{k}" for k in _EFFECTS}
    | {f"kappa.{k}" for k in _KAPPA}
    | {"shares", "effects", "kappa", "sigma"}
)
_KNOWN = _PRESET_OWNED | {
    "design", "s1", "s2", "m1", "m2", "rho", "threshold", "n", "trials", "seed", "preset",
}


@dataclass(frozen=True)
class RunConfig:
    env: EnvironmentConfig
    preset: str | None
    source: dict[str, str]


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _KNOWN:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _floats(value: str, count: int, key: str) -> list[float]:
    parts = [p for p in value.replace(",", " ").split()]
    if len(parts) != count:
        raise ConfigError(f"{key}: expected {count} numbers, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{key}: not a number in {value!r}") from None


def _number(kv: dict[str, str], key: str, cast=float):
    try:
        return cast(kv[key])
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {kv[key]!r}") from None


def _sign(value: str, key: str) -> int:
    try:
        s = int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected +1 or -1") from None
    if s not in (1, -1):
        raise ConfigError(f"{key}: expected +1 or -1")
    return s


def _block(kv: dict[str, str], prefix: str, names: tuple[str, ...], default) -> list[float]:
    if prefix in kv:
        if any(f"{prefix}.{k}" in kv for k in names):
            raise ConfigError(f"{prefix} given both as a list and per entry")
        return _floats(kv[prefix], len(names), prefix)
    return [_number(kv, f"{prefix}.{k}") if f"{prefix}.{k}" in kv else d
            for k, d in zip(names, default)]


def build_config(kv: dict[str, str], seed: int | None = None) -> RunConfig:
    preset = kv.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        clash = sorted(k for k in kv if k in _PRESET_OWNED)
        if clash:
            raise ConfigError(f"keys {', '.join(clash)} conflict with preset {preset}")
        base = PRESETS[preset]
        profile, response = base.profile, base.response
    else:
        if "kappa" not in kv and not all(f"kappa.{k}" in kv for k in _KAPPA):
            raise ConfigError("kappa is required when no preset is given")
        if "sigma" not in kv:
            raise ConfigError("sigma is required when no preset is given")
        d = TypeProfile()
        try:
            profile = TypeProfile(*_block(kv, "shares", _SHARES, d.shares),
                                  *_block(kv, "effects", _EFFECTS, d.effects))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        response = None
    try:
        if response is None:
            response = ResponseSpec.from_flat(
                *_block(kv, "kappa", _KAPPA, (0, 0, 0, 0)),
                sigma=_number(kv, "sigma"),
                rho=_number(kv, "rho") if "rho" in kv else -0.45,
                threshold=_number(kv, "threshold") if "threshold" in kv else 0.0,
            )
        else:
            response = ResponseSpec(
                kappa=response.kappa,
                sigma=response.sigma,
                rho=_number(kv, "rho") if "rho" in kv else response.rho,
                threshold=_number(kv, "threshold") if "threshold" in kv else response.threshold,
            )
        directives = DirectedDesign(
            _sign(kv.get("s1", "1"), "s1"), _sign(kv.get("s2", "1"), "s2"),
            kv.get("m1", ""), kv.get("m2", ""),
        )
        env = EnvironmentConfig(
            profile=profile,
            response=response,
            n=_number(kv, "n", int) if "n" in kv else 10_000,
            trials=_number(kv, "trials", int) if "trials" in kv else 1_000,
            seed=seed if seed is not None else (_number(kv, "seed", int) if "seed" in kv else 0),
            design=kv.get("design", "joint"),
            directives=directives,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(env, preset, kv)


def load_config(path: str | Path, seed: int | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return build_config(parse_config_text(text), seed)
