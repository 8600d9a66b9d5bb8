"""Behavioral-type micro-simulation and Monte Carlo study.

Units are always-takers (A), never-takers (N), persuasion-prone (C) or
reactance-prone (F).  C and F units take up treatment when

    kappa[t, 1] * s1 * z1 + kappa[t, 2] * s2 * z2 + eta > threshold,

with ``eta ~ N(0, sigma**2)``.  ``kappa`` holds the attribute responsiveness
(nonnegative for C, nonpositive for F); the directive signs come from the
environment's :class:`DirectedDesign`.  Outcomes are ``Y(0) = eps`` and
``Y(1) = tau[type] + eps`` with one ``eps ~ N(0, 1)`` per unit.

Random numbers: every trial draws from its own PCG64 generator seeded with
``SeedSequence([seed, trial_index])``, so a trial is reproducible on its own
and results do not depend on the order in which trials run.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .errors import DiivError, RelevanceViolated
from .estimand import EXACT_TOL, DirectedDesign
from .normal import interval_mass
from .table import ObservationTable
from .twostage import iv_fit, two_stage_joint, two_stage_parallel

TYPES = ("A", "N", "C", "F")
QUANTILES = (0.01, 0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975, 0.99)
BIN_WIDTH = 0.02


@dataclass(frozen=True)
class TypeProfile:
    pi_A: float = 0.1
    pi_N: float = 0.1
    pi_C: float = 0.4
    pi_F: float = 0.4
    tau_A: float = 4.0
    tau_N: float = 1.0
    tau_C: float = 3.0
    tau_F: float = 2.0

    def __post_init__(self) -> None:
        shares = self.shares
        if min(shares) < 0:
            raise ValueError("type shares must be nonnegative")
        if abs(sum(shares) - 1.0) > 1e-12:
            raise ValueError(f"type shares sum to {sum(shares)!r}, not 1")
        if not all(math.isfinite(t) for t in self.effects):
            raise ValueError("treatment effects must be finite")

    @property
    def shares(self) -> tuple[float, float, float, float]:
        return self.pi_A, self.pi_N, self.pi_C, self.pi_F

    @property
    def effects(self) -> tuple[float, float, float, float]:
        return self.tau_A, self.tau_N, self.tau_C, self.tau_F


@dataclass(frozen=True)
class ResponseSpec:
    # rows: C, F; columns: instrument 1, 2
    kappa: tuple[tuple[float, float], tuple[float, float]] = ((2.0, 0.5), (-0.2, -0.5))
    sigma: float = 2.0
    rho: float = -0.45
    threshold: float = 0.0

    def __post_init__(self) -> None:
        k = np.asarray(self.kappa, dtype=np.float64)
        if k.shape != (2, 2) or not np.all(np.isfinite(k)):
            raise ValueError("kappa must be a finite 2x2 array")
        if np.any(k[0] < 0) or np.any(k[1] > 0):
            raise ValueError("kappa for C must be >= 0 and for F <= 0")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not -1 < self.rho < 1:
            raise ValueError("rho must lie in (-1, 1)")
        object.__setattr__(self, "kappa", tuple(tuple(float(v) for v in row) for row in k))

    @classmethod
    def from_flat(cls, kC1, kC2, kF1, kF2, **kw) -> "ResponseSpec":
        return cls(kappa=((kC1, kC2), (kF1, kF2)), **kw)

    @property
    def flat(self) -> tuple[float, float, float, float]:
        (c1, c2), (f1, f2) = self.kappa
        return c1, c2, f1, f2


@dataclass(frozen=True)
class EnvironmentConfig:
    profile: TypeProfile = field(default_factory=TypeProfile)
    response: ResponseSpec = field(default_factory=ResponseSpec)
    n: int = 10_000
    trials: int = 1_000
    seed: int = 0
    design: Literal["parallel", "joint"] = "joint"
    directives: DirectedDesign = field(default_factory=DirectedDesign)

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.design not in ("parallel", "joint"):
            raise ValueError(f"unknown design {self.design!r}")

    def with_(self, **changes) -> "EnvironmentConfig":
        return replace(self, **changes)


def _preset(kC1, kC2, kF1, kF2, sigma) -> EnvironmentConfig:
    return EnvironmentConfig(response=ResponseSpec.from_flat(kC1, kC2, kF1, kF2, sigma=sigma))


PRESETS: dict[str, EnvironmentConfig] = {
    "env-a": _preset(2.0, 0.5, -0.2, -0.5, 2.0),
    "env-b": _preset(0.5, 0.2, -0.5, -2.0, 2.0),
    "env-c": _preset(2.0, 0.5, -0.2, -0.5, 1.0),
    "env-d": _preset(0.5, 0.2, -0.5, -2.0, 1.0),
}


@dataclass(frozen=True)
class AnalyticShares:
    pC1: float
    pC2: float
    pF1: float
    pF2: float
    lam: float
    target_tau: float
    ordering_ok: bool

    @property
    def lambda_(self) -> float:
        return self.lam


@dataclass(frozen=True)
class LatentRecord:
    types: np.ndarray  # int8 codes into TYPES
    eta: np.ndarray
    y0: np.ndarray
    y1: np.ndarray


@dataclass(frozen=True)
class SimulatedTrial:
    table: ObservationTable
    latent: LatentRecord


def _increments(config: EnvironmentConfig) -> np.ndarray:
    """Signed index increments, rows (C, F) by instrument."""
    s = np.array(config.directives.signs, dtype=np.float64)
    return np.asarray(config.response.kappa) * s


def analytic_shares(config: EnvironmentConfig) -> AnalyticShares:
    """Population shares of C and F units shifted by each instrument alone, and the DIIV weight."""
    resp, prof = config.response, config.profile
    inc = _increments(config)
    v = resp.threshold
    # a unit responds iff eta lies between v - increment and v
    phi = np.array([[abs(interval_mass(min(v - k, v), max(v - k, v), resp.sigma)) for k in row]
                    for row in inc])
    pC1, pC2 = prof.pi_C * phi[0]
    pF1, pF2 = prof.pi_F * phi[1]
    dc = pC1 - pC2
    den = dc - (pF1 - pF2)
    if not den > EXACT_TOL:
        raise RelevanceViolated(f"differential shift {den:.3g} is not positive")
    lam = dc / den
    return AnalyticShares(
        float(pC1), float(pC2), float(pF1), float(pF2), float(lam),
        float(lam * prof.tau_C + (1 - lam) * prof.tau_F),
        bool(pC1 >= pC2 and pF1 <= pF2),
    )


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial_index])))


def simulate_trial(config: EnvironmentConfig, trial_index: int = 0) -> SimulatedTrial:
    rng = trial_rng(config.seed, trial_index)
    n, prof, resp = config.n, config.profile, config.response
    # draw order is part of the reproducibility contract
    cum = np.cumsum(prof.shares)
    cum[-1] = 1.0
    types = np.searchsorted(cum, rng.random(n), side="right").astype(np.int8)
    eta = rng.normal(0.0, resp.sigma, n)
    eps = rng.normal(0.0, 1.0, n)
    inc = _increments(config)
    is_c, is_f = types == 2, types == 3

    if config.design == "joint":
        e1 = rng.normal(size=n)
        e2 = rng.normal(size=n) + resp.rho * e1
        z1 = (e1 > 0).astype(np.int8)
        z2 = (e2 > 0).astype(np.int8)
        index = np.where(is_c, inc[0, 0] * z1 + inc[0, 1] * z2, 0.0)
        index = np.where(is_f, inc[1, 0] * z1 + inc[1, 1] * z2, index)
        h = None
    else:
        h = (rng.random(n) < 0.5).astype(np.int8)
        z = (rng.random(n) < 0.5).astype(np.int8)
        col = np.where(h == 1, 0, 1)
        index = np.where(is_c, inc[0, col] * z, 0.0)
        index = np.where(is_f, inc[1, col] * z, index)
        z1, z2 = z, None

    d = (index + eta > resp.threshold).astype(np.int8)
    d[types == 0] = 1
    d[types == 1] = 0
    tau = np.asarray(prof.effects)[types]
    y0 = eps
    y1 = eps + tau
    y = np.where(d == 1, y1, y0)
    table = ObservationTable(y=y, d=d, z1=z1, z2=z2, h=h)
    return SimulatedTrial(table, LatentRecord(types, eta, y0, y1))


def realized_shares(trial: SimulatedTrial, config: EnvironmentConfig) -> tuple[float, float, float, float]:
    """Sample fractions of units that are C (F) and whose shock sits in the response band of each instrument."""
    lat = trial.latent
    inc = _increments(config)
    v = config.response.threshold
    out = []
    for code, row in ((2, inc[0]), (3, inc[1])):
        for k in row:
            lo, hi = min(v - k, v), max(v - k, v)
            band = (lat.eta > lo) & (lat.eta <= hi)
            out.append(float(np.mean((lat.types == code) & band)))
    return tuple(out)


def overidentified_iv(table: ObservationTable, se_kind="robust") -> float:
    """2SLS of y on d with intercept, instrumenting with z1 and z2 together."""
    if table.z2 is not None:
        z1, z2 = table.z1, table.z2
    else:
        z = table.assignment()
        z1, z2 = z * table.h, z * (1 - table.h)
    fit = iv_fit(table.y, table.d, np.ones(table.n), np.column_stack([z1, z2]), ("d", "const"), se_kind)
    return fit["d"]


def diiv_two_stage(table: ObservationTable, config: EnvironmentConfig) -> float:
    if config.design == "joint":
        return two_stage_joint(table, config.directives).tau
    return two_stage_parallel(table).tau


@dataclass(frozen=True)
class TrialResult:
    trial: int
    diiv: float
    overidentified_iv: float
    flagged: bool
    reason: str = ""


def run_trial(config: EnvironmentConfig, trial_index: int) -> TrialResult:
    table = simulate_trial(config, trial_index).table
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            diiv = diiv_two_stage(table, config)
            over = overidentified_iv(table)
        except DiivError as exc:
            return TrialResult(trial_index, math.nan, math.nan, True, type(exc).__name__)
    return TrialResult(trial_index, diiv, over, False)


@dataclass(frozen=True)
class Moments:
    mean: float
    sd: float
    trimmed_mean: float
    trimmed_sd: float
    quantiles: dict[float, float]

    @classmethod
    def of(cls, x: np.ndarray) -> "Moments":
        if x.size == 0:
            nan = math.nan
            return cls(nan, nan, nan, nan, {q: nan for q in QUANTILES})
        lo, hi = np.quantile(x, [0.01, 0.99])
        core = x[(x >= lo) & (x <= hi)]
        sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        tsd = float(np.std(core, ddof=1)) if core.size > 1 else 0.0
        qs = np.quantile(x, QUANTILES)
        return cls(float(np.mean(x)), sd, float(np.mean(core)), tsd,
                   {q: float(v) for q, v in zip(QUANTILES, qs)})


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    diiv_counts: np.ndarray
    overid_counts: np.ndarray


def histogram(a: np.ndarray, b: np.ndarray, width: float = BIN_WIDTH) -> Histogram:
    """Common fixed-width bins covering both samples; edges sit on integer multiples of ``width``."""
    both = np.concatenate([a, b])
    if both.size == 0:
        return Histogram(np.array([0.0, width]), np.zeros(1, int), np.zeros(1, int))
    kmin = int(math.floor(both.min() / width))
    kmax = int(math.floor(both.max() / width)) + 1
    edges = np.arange(kmin, kmax + 1) * width

    def count(x):
        idx = np.clip(np.floor(x / width).astype(np.int64) - kmin, 0, kmax - kmin - 1)
        return np.bincount(idx, minlength=kmax - kmin)

    return Histogram(edges, count(a), count(b))


@dataclass(frozen=True)
class MonteCarloSummary:
    config: EnvironmentConfig
    trials: tuple[TrialResult, ...]
    diiv: Moments
    overid: Moments
    hist: Histogram
    analytic: AnalyticShares | None

    @property
    def n_flagged(self) -> int:
        return sum(t.flagged for t in self.trials)

    @property
    def diiv_estimates(self) -> np.ndarray:
        return np.array([t.diiv for t in self.trials])

    @property
    def overid_estimates(self) -> np.ndarray:
        return np.array([t.overidentified_iv for t in self.trials])


def run_monte_carlo(config: EnvironmentConfig, workers: int = 1) -> MonteCarloSummary:
    """Run ``config.trials`` independent trials; ``workers > 1`` runs them on a thread pool."""
    idx = range(config.trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda t: run_trial(config, t), idx))
    else:
        results = [run_trial(config, t) for t in idx]
    results.sort(key=lambda r: r.trial)
    ok = [r for r in results if not r.flagged]
    diiv = np.array([r.diiv for r in ok])
    over = np.array([r.overidentified_iv for r in ok])
    try:
        analytic = analytic_shares(config)
    except RelevanceViolated:
        analytic = None
    return MonteCarloSummary(config, tuple(results), Moments.of(diiv), Moments.of(over),
                             histogram(diiv, over), analytic)
