"""Submodel selection over {S : |S| <= M}: exhaustive, greedy, screening.

Ties are broken toward the smaller submodel, then lexicographically
smaller index tuple, so results are reproducible bit-for-bit no matter
how candidate evaluations are scheduled.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .basis import DesignMatrix, SplineSpec, Submodel, build_design
from .criterion import BICRecord, PenaltySpec, bic_submodel
from .fitting import fit_least_squares

__all__ = [
    "SearchResult",
    "BudgetExceededError",
    "exhaustive_select",
    "greedy_forward_select",
    "screen_components",
    "default_screen_keep",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 2_000_000


class BudgetExceededError(RuntimeError):
    """Raised when exhaustive enumeration would exceed the evaluation budget."""

    def __init__(self, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(
            f"exhaustive search needs {required} submodel evaluations, "
            f"over the budget of {budget}"
        )


@dataclass(frozen=True)
class SearchResult:
    selected: Submodel
    records: tuple[BICRecord, ...]
    strategy: str
    evaluations: int


def _better(candidate: BICRecord, incumbent: BICRecord | None) -> bool:
    """Strictly-lower criterion wins; evaluation order encodes the tie rule."""
    return incumbent is None or candidate.criterion < incumbent.criterion


def exhaustive_select(
    design: DesignMatrix,
    Y: np.ndarray,
    M: int,
    spec: PenaltySpec,
    candidates: Sequence[int] | None = None,
    budget: int = DEFAULT_BUDGET,
) -> SearchResult:
    """Evaluate every submodel of size <= M and return the criterion arg-min.

    ``candidates`` restricts the component pool (used after
    screening); by default all p components are eligible.  Candidates
    are enumerated smallest-size first and lexicographically within a
    size, so keeping the first strict improvement implements the tie
    rule directly.
    """
    if candidates is None:
        pool = tuple(range(1, design.p + 1))
    else:
        pool = tuple(sorted(int(j) for j in candidates))
        if len(set(pool)) != len(pool):
            raise ValueError("candidate list has duplicates")
        if pool and (pool[0] < 1 or pool[-1] > design.p):
            raise ValueError(f"candidates out of range for p = {design.p}")
    if M < 0 or M > design.p:
        raise ValueError(f"need 0 <= M <= p = {design.p}, got {M}")
    m_eff = min(M, len(pool))

    required = sum(math.comb(len(pool), j) for j in range(m_eff + 1))
    if required > budget:
        raise BudgetExceededError(required, budget)

    records: list[BICRecord] = []
    best: BICRecord | None = None
    for size in range(m_eff + 1):
        for combo in itertools.combinations(pool, size):
            rec = bic_submodel(design, Y, Submodel(combo), spec)
            records.append(rec)
            if _better(rec, best):
                best = rec
    return SearchResult(
        selected=best.label,
        records=tuple(records),
        strategy="exhaustive",
        evaluations=len(records),
    )


def greedy_forward_select(
    design: DesignMatrix,
    Y: np.ndarray,
    M: int,
    spec: PenaltySpec,
) -> SearchResult:
    """Forward stepwise search: add the best single component until no
    addition improves the criterion or the size cap M is reached."""
    if M < 0 or M > design.p:
        raise ValueError(f"need 0 <= M <= p = {design.p}, got {M}")

    current = bic_submodel(design, Y, Submodel(()), spec)
    records: list[BICRecord] = [current]
    while current.label.size < M:
        chosen = set(current.label.indices)
        best_step: BICRecord | None = None
        for j in range(1, design.p + 1):
            if j in chosen:
                continue
            trial = Submodel(tuple(sorted(chosen | {j})))
            rec = bic_submodel(design, Y, trial, spec)
            records.append(rec)
            if _better(rec, best_step):
                best_step = rec
        if best_step is None or best_step.criterion >= current.criterion:
            break
        current = best_step
    return SearchResult(
        selected=current.label,
        records=tuple(records),
        strategy="greedy",
        evaluations=len(records),
    )


def default_screen_keep(n: int, p: int) -> int:
    """Conventional screening budget min(p, ceil(n / log n))."""
    return min(p, math.ceil(n / math.log(n)))


def screen_components(
    X: np.ndarray,
    Y: np.ndarray,
    spec: SplineSpec,
    keep: int,
) -> list[int]:
    """Rank components by marginal spline-fit RSS reduction, keep the top m.

    Each component is fitted alone (intercept plus its centered
    block); the reduction is relative to the intercept-only RSS.
    Ranking is by reduction descending, index ascending on ties, so
    the output is deterministic.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    n, p = X.shape
    if not 1 <= keep <= p:
        raise ValueError(f"need 1 <= keep <= p = {p}, got {keep}")

    rss0 = float(np.sum((Y - Y.mean()) ** 2))
    reductions = np.empty(p)
    for j in range(p):
        mini = build_design(X[:, [j]], spec)
        fit = fit_least_squares(mini.values, Y)
        reductions[j] = rss0 - fit.rss
    order = sorted(range(p), key=lambda j: (-reductions[j], j))
    return [j + 1 for j in order[:keep]]
