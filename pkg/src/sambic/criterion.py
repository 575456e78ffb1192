"""BIC-type criterion values for submodels and penalized-path entries.

The criterion is log(RSS) + pen(S) with natural logarithms.  Three
built-in penalty families are provided, all zero at |S| = 0 and
strictly increasing in |S|:

* ``semiparametric``: |S| * K * (log n + log p) / n
* ``classic``:        |S| * K * log n / n
* ``scaled``:         C_n * |S| * K * log n / n

The scaled family needs a positive sequence constant C_n; the default
log(log n) is only positive for n >= 16, so smaller samples must
supply ``cn`` explicitly.  A ``custom`` variant takes any callable of
(size, K, n, p); it is the caller's job to keep it zero at size 0 and
increasing in size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import DesignMatrix, Submodel
from .fitting import active_set, fit_submodel

__all__ = [
    "PenaltySpec",
    "BICRecord",
    "penalty_value",
    "criterion_from_rss",
    "bic_submodel",
    "bic_lambda",
    "RSS_FLOOR",
    "RSS_REL_FLOOR",
    "PENALTY_VARIANTS",
]

# RSS is floored before the log so exact fits stay finite.  The hard
# floor is 1e-300; on top of that, an rss below the squared rounding
# noise of the response (REL_FLOOR * ||Y||^2) is treated as an exact
# fit, because in floating point a noiseless, representable response
# leaves an rss of order (eps * ||Y||)^2 rather than zero, and
# comparing logs of such residuals is meaningless.  Floored records of
# the same response share one criterion value, so they are ordered
# purely by penalty.
RSS_FLOOR = 1e-300
RSS_REL_FLOOR = 1e-24

PENALTY_VARIANTS = ("semiparametric", "classic", "scaled", "custom")


@dataclass(frozen=True)
class PenaltySpec:
    variant: str = "semiparametric"
    cn: float | None = None
    custom: Callable[[int, int, int, int], float] | None = None

    def __post_init__(self):
        if self.variant not in PENALTY_VARIANTS:
            raise ValueError(
                f"unknown penalty variant {self.variant!r}; "
                f"expected one of {PENALTY_VARIANTS}"
            )
        if self.variant == "custom" and self.custom is None:
            raise ValueError("custom penalty variant needs a callable")


@dataclass(frozen=True)
class BICRecord:
    """One evaluated criterion value.

    ``label`` is the submodel for subset-search records, or the
    lambda value for path records.  ``floored`` marks records where
    the RSS hit the floor (essentially an exact fit).
    """

    label: Submodel | float
    rss: float
    penalty_value: float
    criterion: float
    floored: bool


def penalty_value(spec: PenaltySpec, size: int, K: int, n: int, p: int) -> float:
    """Penalty pen(S) for a submodel of the given size."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    if K < 1:
        raise ValueError(f"need K >= 1, got {K}")
    if size < 0:
        raise ValueError(f"need size >= 0, got {size}")

    if spec.variant == "semiparametric":
        return size * K * (math.log(n) + math.log(p)) / n
    if spec.variant == "classic":
        return size * K * math.log(n) / n
    if spec.variant == "scaled":
        cn = spec.cn if spec.cn is not None else math.log(math.log(n))
        if cn <= 0.0:
            raise ValueError(
                f"scaled penalty needs C_n > 0; log(log n) = {cn:.4g} for "
                f"n = {n} is not positive, supply cn explicitly"
            )
        return cn * size * K * math.log(n) / n
    return float(spec.custom(size, K, n, p))


def criterion_from_rss(rss: float, pen: float, y_sq_norm: float = 0.0) -> tuple[float, bool]:
    """log(floored rss) + penalty, and whether the floor was applied."""
    floor = max(RSS_FLOOR, RSS_REL_FLOOR * y_sq_norm)
    floored = rss < floor
    return math.log(max(rss, floor)) + pen, floored


def _make_record(label, rss: float, pen: float, y_sq_norm: float) -> BICRecord:
    value, floored = criterion_from_rss(rss, pen, y_sq_norm)
    return BICRecord(
        label=label,
        rss=rss,
        penalty_value=pen,
        criterion=value,
        floored=floored,
    )


def bic_submodel(
    design: DesignMatrix,
    Y: np.ndarray,
    S: Submodel,
    spec: PenaltySpec,
) -> BICRecord:
    """Least-squares fit on Z_S and its criterion value."""
    Y = np.asarray(Y, dtype=float).ravel()
    fit = fit_submodel(design, Y, S)
    pen = penalty_value(spec, S.size, design.spec.dim, design.n, design.p)
    return _make_record(S, fit.rss, pen, float(Y @ Y))


def bic_lambda(
    design: DesignMatrix,
    Y: np.ndarray,
    coefficients: np.ndarray,
    lam: float,
    spec: PenaltySpec,
) -> BICRecord:
    """Criterion of a penalized solution: RSS of the penalized fit itself
    (no refit) plus the penalty of its active set."""
    Y = np.asarray(Y, dtype=float).ravel()
    coefficients = np.asarray(coefficients, dtype=float).ravel()
    if coefficients.shape[0] != design.values.shape[1]:
        raise ValueError(
            f"coefficients have length {coefficients.shape[0]}, design has "
            f"{design.values.shape[1]} columns"
        )
    if Y.shape[0] != design.n:
        raise ValueError(f"response has {Y.shape[0]} entries, design has {design.n} rows")
    resid = Y - design.values @ coefficients
    rss = float(resid @ resid)
    S = active_set(coefficients, design.p, design.spec.dim)
    pen = penalty_value(spec, S.size, design.spec.dim, design.n, design.p)
    return _make_record(float(lam), rss, pen, float(Y @ Y))
