"""Least squares and just-identified 2SLS for the DIIV regression forms.

Two representations are provided:

* :func:`two_stage_parallel` -- split-population design, instrumenting take-up
  with ``w = 1 - (z XOR h)`` while controlling for the frame ``h``.
* :func:`two_stage_joint` -- both instruments observed; instrument with
  ``x_delta`` after aligning directives, controlling for ``x_sigma`` and
  ``x_cross``.

Standard errors are HC1 by default, classical on request.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy import linalg

from .errors import FrameImbalance, MissingCell, RankDeficient, WeakContrast, ZeroDenominator
from .estimand import DATA_TOL, DirectedDesign, align_instrument
from .table import ObservationTable, as_binary

SeKind = Literal["classical", "robust"]

RANK_TOL = 1e-10
WEAK_F = 10.0


@dataclass(frozen=True)
class DesignMatrix:
    response: np.ndarray
    regressors: np.ndarray
    names: tuple[str, ...]
    excluded_instrument: np.ndarray | None = None

    def __post_init__(self) -> None:
        X = np.asarray(self.regressors, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.response, dtype=np.float64)
        if y.shape[0] != X.shape[0]:
            raise ValueError("response and regressors differ in length")
        if len(self.names) != X.shape[1]:
            raise ValueError("one name per regressor column required")
        if X.shape[0] <= X.shape[1]:
            raise RankDeficient(f"n={X.shape[0]} does not exceed k={X.shape[1]}")
        object.__setattr__(self, "regressors", X)
        object.__setattr__(self, "response", y)

    @property
    def n(self) -> int:
        return self.regressors.shape[0]

    @property
    def k(self) -> int:
        return self.regressors.shape[1]


@dataclass(frozen=True)
class OLSFit:
    names: tuple[str, ...]
    coef: np.ndarray
    resid: np.ndarray
    cov: np.ndarray
    se_kind: SeKind

    def __getitem__(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def se(self, name: str) -> float:
        i = self.names.index(name)
        return float(np.sqrt(self.cov[i, i]))


@dataclass(frozen=True)
class TwoStageReport:
    tau: float
    se: float
    first_stage_beta: float
    first_stage_se: float
    first_stage_f: float
    first_stage_f_classical: float
    first_stage_f_robust: float
    n: int
    se_kind: SeKind
    method: Literal["parallel-xor", "joint-delta"]
    controls: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class DerivedRegressors:
    x_delta: np.ndarray
    x_sigma: np.ndarray
    x_cross: np.ndarray


class _QR:
    """Pivoted QR of a regressor block with the rank checked up front."""

    def __init__(self, X: np.ndarray):
        q, r, piv = linalg.qr(X, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        if diag.size == 0 or diag[0] == 0.0 or np.any(diag <= RANK_TOL * diag[0]):
            raise RankDeficient("regressors are collinear")
        self.q, self.r, self.piv = q, r, piv

    def solve(self, y: np.ndarray) -> np.ndarray:
        z = linalg.solve_triangular(self.r, self.q.T @ y)
        out = np.empty_like(z)
        out[self.piv] = z
        return out

    def xtx_inv(self) -> np.ndarray:
        k = self.r.shape[0]
        rinv = linalg.solve_triangular(self.r, np.eye(k))
        inner = rinv @ rinv.T
        out = np.empty_like(inner)
        out[np.ix_(self.piv, self.piv)] = inner
        return out


def _sandwich(X: np.ndarray, resid: np.ndarray, bread: np.ndarray, se_kind: SeKind) -> np.ndarray:
    n, k = X.shape
    if se_kind == "classical":
        sigma2 = float(resid @ resid) / (n - k)
        return sigma2 * bread
    if se_kind != "robust":
        raise ValueError(f"unknown se_kind {se_kind!r}")
    Xu = X * resid[:, None]
    cov = bread @ (Xu.T @ Xu) @ bread * (n / (n - k))
    return 0.5 * (cov + cov.T)


def ols_fit(design: DesignMatrix, se_kind: SeKind = "robust") -> OLSFit:
    X, y = design.regressors, design.response
    qr = _QR(X)
    coef = qr.solve(y)
    resid = y - X @ coef
    cov = _sandwich(X, resid, qr.xtx_inv(), se_kind)
    return OLSFit(design.names, coef, resid, cov, se_kind)


def iv_fit(
    y: np.ndarray,
    endog: np.ndarray,
    exog: np.ndarray,
    instruments: np.ndarray,
    names: Sequence[str],
    se_kind: SeKind = "robust",
) -> OLSFit:
    """2SLS of ``y`` on ``[endog, exog]`` with ``[exog, instruments]`` as the instrument set.

    ``names`` labels the columns of ``[endog, exog]``.  Residuals are structural,
    i.e. computed with observed rather than fitted endogenous regressors.
    """
    y = np.asarray(y, dtype=np.float64)
    endog = np.atleast_2d(np.asarray(endog, dtype=np.float64).T).T
    exog = np.atleast_2d(np.asarray(exog, dtype=np.float64).T).T
    instruments = np.atleast_2d(np.asarray(instruments, dtype=np.float64).T).T
    Z = np.column_stack([exog, instruments])
    if Z.shape[0] <= Z.shape[1]:
        raise RankDeficient("too few rows for the instrument set")
    zqr = _QR(Z)
    fitted = Z @ zqr.solve(endog)
    Xhat = np.column_stack([fitted, exog])
    X = np.column_stack([endog, exog])
    xqr = _QR(Xhat)
    coef = xqr.solve(y)
    resid = y - X @ coef
    cov = _sandwich(Xhat, resid, xqr.xtx_inv(), se_kind)
    return OLSFit(tuple(names), coef, resid, cov, se_kind)


def composite_xor_instrument(z_pool, h) -> np.ndarray:
    """1 where the pooled assignment agrees with the frame indicator, else 0."""
    z = as_binary(z_pool, "z_pool")
    h = as_binary(h, "h")
    if z.shape != h.shape:
        raise ValueError("z_pool and h differ in length")
    return (1 - (z ^ h)).astype(np.int8)


def derived_regressors(z1, z2, design: DirectedDesign | None = None) -> DerivedRegressors:
    design = design or DirectedDesign()
    a1 = align_instrument(z1, design.s1).astype(np.int64)
    a2 = align_instrument(z2, design.s2).astype(np.int64)
    return DerivedRegressors(x_delta=a1 - a2, x_sigma=a1 + a2, x_cross=a1 * a2)


def _first_stage(d, exog, exog_names, instrument, inst_name):
    X = np.column_stack([exog, instrument])
    names = tuple(exog_names) + (inst_name,)
    design = DesignMatrix(np.asarray(d, dtype=np.float64), X, names, instrument)
    qr = _QR(design.regressors)
    coef = qr.solve(design.response)
    resid = design.response - design.regressors @ coef
    bread = qr.xtx_inv()
    i = len(names) - 1
    beta = float(coef[i])
    var = {kind: _sandwich(design.regressors, resid, bread, kind)[i, i]
           for kind in ("classical", "robust")}
    f = {kind: beta * beta / v if v > 0 else np.inf for kind, v in var.items()}
    return beta, {k: float(np.sqrt(v)) for k, v in var.items()}, f


def _report(table, exog, exog_names, instrument, inst_name, se_kind, method, notes):
    beta, fs_se, fs_f = _first_stage(table.d, exog, exog_names, instrument, inst_name)
    if abs(beta) <= DATA_TOL:
        raise ZeroDenominator(f"first-stage coefficient {beta:.3g} is degenerate")
    fit = iv_fit(table.y, table.d, exog, instrument, ("d",) + tuple(exog_names), se_kind)
    notes = list(notes)
    if fs_f[se_kind] < WEAK_F:
        notes.append("WeakContrast")
        warnings.warn(f"first-stage F = {fs_f[se_kind]:.3g} < {WEAK_F:g}", WeakContrast, stacklevel=3)
    return TwoStageReport(
        tau=fit["d"],
        se=fit.se("d"),
        first_stage_beta=beta,
        first_stage_se=fs_se[se_kind],
        first_stage_f=fs_f[se_kind],
        first_stage_f_classical=fs_f["classical"],
        first_stage_f_robust=fs_f["robust"],
        n=table.n,
        se_kind=se_kind,
        method=method,
        controls=tuple(exog_names[1:]),
        warnings=tuple(notes),
    )


def two_stage_parallel(
    table: ObservationTable,
    se_kind: SeKind = "robust",
    covariates: Sequence[str] = (),
) -> TwoStageReport:
    """XOR-instrument 2SLS for the split-population design.

    Reproduces the raw DIIV ratio exactly when both frames have the same
    assignment variance ``n_f * p_f * (1 - p_f)``; otherwise the two frame
    contrasts are weighted by it and a FrameImbalance warning is raised.
    """
    table.resolve_mode("parallel")
    z, h = table.assignment(), table.h
    counts = {(a, b): int(np.count_nonzero((z == a) & (h == b))) for a in (0, 1) for b in (0, 1)}
    for cell, c in counts.items():
        if c == 0:
            raise MissingCell(f"(z, h) cell {cell} is empty")
    notes = []
    spread = [counts[(1, f)] * counts[(0, f)] / (counts[(1, f)] + counts[(0, f)]) for f in (1, 0)]
    if abs(spread[0] - spread[1]) > 1e-12 * max(spread):
        notes.append("FrameImbalance")
        warnings.warn("frames differ in assignment variance", FrameImbalance, stacklevel=2)
    w = composite_xor_instrument(z, h)
    covs = table.covariate_matrix(covariates)
    exog = np.column_stack([np.ones(table.n), h, covs])
    names = ("const", "h") + tuple(covariates)
    return _report(table, exog, names, w, "w", se_kind, "parallel-xor", notes)


def two_stage_joint(
    table: ObservationTable,
    design: DirectedDesign | None = None,
    se_kind: SeKind = "robust",
    covariates: Sequence[str] = (),
    drop_cross: bool = False,
) -> TwoStageReport:
    """``x_delta``-instrument 2SLS for jointly assigned instruments.

    ``x_cross`` is left out when ``drop_cross`` is set or when no row falls in
    the aligned (1, 1) cell.
    """
    table.resolve_mode("joint")
    x = derived_regressors(table.z1, table.z2, design)
    edge = {(1, 0): x.x_delta == 1, (0, 1): x.x_delta == -1}
    for cell, mask in edge.items():
        if not mask.any():
            raise MissingCell(f"aligned cell {cell} is empty")
    notes = []
    cols, names = [np.ones(table.n), x.x_sigma], ["const", "x_sigma"]
    if drop_cross or not x.x_cross.any():
        notes.append("CrossDropped")
    else:
        cols.append(x.x_cross)
        names.append("x_cross")
    exog = np.column_stack(cols + [table.covariate_matrix(covariates)])
    names = tuple(names) + tuple(covariates)
    return _report(table, exog, names, x.x_delta, "x_delta", se_kind, "joint-delta", notes)
