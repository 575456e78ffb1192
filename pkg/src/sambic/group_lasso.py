"""Group LASSO / group adaptive LASSO solver with a BIC-tuned lambda path.

Objective, in the unnormalized scaling used throughout:

    F(a) = ||Y - Z a||^2 + lambda * sum_j w_j ||b_j||

where a = (intercept slot, b_1, ..., b_p) in the full design layout
and the intercept is never penalized.  Grid anchors and optimality
conditions carry the resulting factor of 2: the all-zero solution is
stationary exactly when ||2 Z_j' r|| <= lambda * w_j for every group.

The solver is block coordinate descent with *exact* block updates.
For one group the subproblem is

    min_b  -2 b'z + b'G b + lambda*w*||b||,   z = Z_j'(partial residual),

with G = Z_j'Z_j = V diag(e) V'.  In the eigenbasis the minimizer is
radial: writing c = 2 V'z and t = ||b||, either ||c|| <= lambda*w and
b = 0, or t solves the scalar secular equation

    sum_i c_i^2 / (2 e_i t + lambda*w)^2 = 1,

whose left side is convex and strictly decreasing, so Newton from
t = 0 converges monotonically.  Exact block minimization makes the
objective non-increasing across sweeps.

A weight of +inf freezes a group at zero: once stage one of the
adaptive pipeline kills a group it can never come back.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._solver import bcd_run
from .basis import DesignMatrix, Submodel, block_slice
from .criterion import BICRecord, PenaltySpec, bic_lambda
from .fitting import active_set

__all__ = [
    "Weights",
    "GridOptions",
    "SolveOptions",
    "SolveInfo",
    "PathResult",
    "TwoStageResult",
    "PathFilterWarning",
    "unit_weights",
    "adaptive_weights",
    "lambda_max",
    "fit_group_lasso",
    "kkt_residual",
    "solve_path",
    "select_lambda",
    "path_records",
    "adaptive_group_lasso_select",
]

class PathFilterWarning(UserWarning):
    """Path entries discarded because their active set exceeds the size cap."""


@dataclass(frozen=True)
class Weights:
    """Per-group penalty weights in (0, +inf]; +inf forces the group to zero."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if np.any(np.isnan(vals)) or np.any(vals <= 0.0):
            raise ValueError("weights must be positive (or +inf)")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def n_finite(self) -> int:
        return int(np.isfinite(self.values).sum())


def unit_weights(p: int) -> Weights:
    return Weights(np.ones(p))


def adaptive_weights(initial_coefficients: np.ndarray, p: int, K: int) -> Weights:
    """w_j = 1 / ||b_j|| from an initial fit; zero groups get +inf."""
    a = np.asarray(initial_coefficients, dtype=float).ravel()
    if a.shape[0] != 1 + p * K:
        raise ValueError(
            f"expected {1 + p * K} coefficients for p={p}, K={K}, got {a.shape[0]}"
        )
    w = np.empty(p)
    for j in range(1, p + 1):
        norm = float(np.linalg.norm(a[block_slice(j, K)]))
        w[j - 1] = 1.0 / norm if norm > 0.0 else np.inf
    return Weights(w)


@dataclass(frozen=True)
class GridOptions:
    count: int = 100
    min_ratio: float = 1e-3

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"grid needs at least 2 points, got {self.count}")
        if not 0.0 < self.min_ratio < 1.0:
            raise ValueError(f"min_ratio must be in (0, 1), got {self.min_ratio}")


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-7
    max_sweeps: int = 1000

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")


@dataclass(frozen=True)
class SolveInfo:
    sweeps: int
    converged: bool
    kkt: float
    objectives: tuple[float, ...] | None = None


@dataclass(frozen=True)
class PathResult:
    """Solutions along a descending lambda grid (warm-started)."""

    lambdas: np.ndarray
    coefficients: np.ndarray  # (len(lambdas), 1 + p*K)
    active_sets: tuple[Submodel, ...]
    sweeps: np.ndarray
    converged: np.ndarray

    def __len__(self) -> int:
        return len(self.lambdas)


def lambda_max(design: DesignMatrix, Y: np.ndarray, weights: Weights) -> float:
    """Smallest lambda at which the all-zero-groups solution is stationary.

    Equals max_j 2 ||Z_j' r0|| / w_j over finite-weight groups, with
    r0 the residual of the intercept-only fit (Y minus its mean).
    """
    Y = np.asarray(Y, dtype=float).ravel()
    w = weights.values
    if w.shape[0] != design.p:
        raise ValueError(f"got {w.shape[0]} weights for p = {design.p}")
    finite = np.isfinite(w)
    if not finite.any():
        raise ValueError("all group weights are infinite; nothing to fit")
    r0 = Y - Y.mean()
    K = design.spec.dim
    grads = (design.values[:, 1:].T @ r0).reshape(design.p, K)
    norms = 2.0 * np.linalg.norm(grads, axis=1)
    return float(np.max(norms[finite] / w[finite]))


class _Workspace:
    """Per-design state for the block solver: eigenbases plus the arrays
    handed to the compiled sweep kernel."""

    def __init__(self, design: DesignMatrix):
        self.design = design
        self.p = design.p
        self.K = design.spec.dim
        Z = np.ascontiguousarray(design.values)
        self.Z = Z
        self.icol = Z[:, 0]
        self.icol_nsq = float(self.icol @ self.icol)
        self.evals = np.empty((self.p, self.K))
        self.evecs = np.empty((self.p, self.K, self.K))
        for j in range(1, self.p + 1):
            B = Z[:, block_slice(j, self.K)]
            e, V = np.linalg.eigh(B.T @ B)
            self.evals[j - 1] = np.maximum(e, 0.0)
            self.evecs[j - 1] = V

    def _refresh_residual(self, Y: np.ndarray, a: np.ndarray) -> np.ndarray:
        return Y - self.Z @ a

    def kkt(self, lam: float, w: np.ndarray, a: np.ndarray, r: np.ndarray) -> float:
        """Max first-order-condition violation; r must be the exact residual."""
        worst = abs(float(self.icol @ r))
        K = self.K
        grads = 2.0 * (self.Z[:, 1:].T @ r).reshape(self.p, K)
        for j in range(self.p):
            if not np.isfinite(w[j]):
                continue
            lw = lam * w[j]
            b = a[1 + j * K : 1 + (j + 1) * K]
            bnorm = float(np.linalg.norm(b))
            if bnorm > 0.0:
                viol = float(np.linalg.norm(grads[j] - lw * b / bnorm))
            else:
                viol = max(0.0, float(np.linalg.norm(grads[j])) - lw)
            worst = max(worst, viol)
        return worst

    def objective(self, lam: float, w: np.ndarray, a: np.ndarray, Y: np.ndarray) -> float:
        r = self._refresh_residual(Y, a)
        obj = float(r @ r)
        K = self.K
        for j in range(self.p):
            if not np.isfinite(w[j]):
                continue
            obj += lam * w[j] * float(np.linalg.norm(a[1 + j * K : 1 + (j + 1) * K]))
        return obj

    def solve(
        self,
        Y: np.ndarray,
        lam: float,
        weights: Weights,
        opts: SolveOptions,
        start: np.ndarray | None = None,
        track_objective: bool = False,
    ) -> tuple[np.ndarray, SolveInfo]:
        w = weights.values
        if w.shape[0] != self.p:
            raise ValueError(f"got {w.shape[0]} weights for p = {self.p}")
        if lam < 0.0:
            raise ValueError(f"lambda must be >= 0, got {lam}")
        kill = ~np.isfinite(w)
        K = self.K
        Y = np.ascontiguousarray(Y, dtype=float)
        if start is None:
            a = np.zeros(1 + self.p * K)
            r = Y.copy()
        else:
            a = np.ascontiguousarray(start, dtype=float).copy()
            for j in np.nonzero(kill)[0]:
                a[1 + j * K : 1 + (j + 1) * K] = 0.0
            r = self._refresh_residual(Y, a)

        kkt_cap = 10.0 * opts.tol
        args = (self.Z, Y, r, a, self.evals, self.evecs, float(lam), w, kill,
                self.icol_nsq, opts.tol, opts.max_sweeps, kkt_cap)
        if not track_objective:
            sweeps, converged, kkt, _ = bcd_run(*args)
            objectives = None
        else:
            # One sweep per kernel call so the true objective can be
            # logged after every sweep; state lives in (a, r), so the
            # iterates match a single long call exactly.
            objectives = []
            sweeps = 0
            converged = False
            kkt = math.inf
            while sweeps < opts.max_sweeps:
                _, converged, kkt, _ = bcd_run(
                    self.Z, Y, r, a, self.evals, self.evecs, float(lam), w,
                    kill, self.icol_nsq, opts.tol, 1, kkt_cap,
                )
                sweeps += 1
                objectives.append(self.objective(lam, w, a, Y))
                if converged:
                    break
            objectives = tuple(objectives)
        if not converged:
            r = self._refresh_residual(Y, a)
            kkt = self.kkt(lam, w, a, r)
        info = SolveInfo(
            sweeps=sweeps,
            converged=bool(converged),
            kkt=float(kkt),
            objectives=objectives,
        )
        return a, info


def fit_group_lasso(
    design: DesignMatrix,
    Y: np.ndarray,
    lam: float,
    weights: Weights,
    opts: SolveOptions | None = None,
    start: np.ndarray | None = None,
    return_info: bool = False,
    track_objective: bool = False,
):
    """Solve the penalized problem at one lambda by block coordinate descent.

    Returns the coefficient vector in the full design layout; with
    ``return_info`` also a :class:`SolveInfo` whose ``converged`` flag
    is False when the sweep cap was hit (the best iterate is still
    returned).
    """
    Y = np.asarray(Y, dtype=float).ravel()
    if Y.shape[0] != design.n:
        raise ValueError(f"response has {Y.shape[0]} entries, design has {design.n} rows")
    opts = opts or SolveOptions()
    ws = _Workspace(design)
    a, info = ws.solve(Y, float(lam), weights, opts, start=start,
                       track_objective=track_objective)
    return (a, info) if return_info else a


def kkt_residual(
    design: DesignMatrix,
    Y: np.ndarray,
    lam: float,
    weights: Weights,
    coefficients: np.ndarray,
) -> float:
    """Max violation of the first-order conditions at the given point.

    Active groups contribute ||2 Z_j' r - lambda w_j b_j / ||b_j||||,
    zero groups max(0, ||2 Z_j' r|| - lambda w_j), and the intercept
    |<col_0, r>|, with r = Y - Z a.
    """
    Y = np.asarray(Y, dtype=float).ravel()
    a = np.asarray(coefficients, dtype=float).ravel()
    ws = _Workspace(design)
    r = ws._refresh_residual(Y, a)
    return ws.kkt(float(lam), weights.values, a, r)


def solve_path(
    design: DesignMatrix,
    Y: np.ndarray,
    weights: Weights,
    grid: GridOptions | None = None,
    opts: SolveOptions | None = None,
    stop_active_above: int | None = None,
) -> PathResult:
    """Warm-started solutions on a log-spaced lambda grid.

    The grid runs from lambda_max down to lambda_max * min_ratio, so
    the first entry always has an empty active set.  With
    ``stop_active_above`` set, the path is truncated once two
    consecutive entries have more than that many active groups; such
    entries are inadmissible for size-capped selection, and deep in
    the overparameterized tail they dominate solve time.
    """
    Y = np.asarray(Y, dtype=float).ravel()
    grid = grid or GridOptions()
    opts = opts or SolveOptions()
    lmax = lambda_max(design, Y, weights)
    if not lmax > 0.0:
        raise ValueError(
            "lambda_max is zero (response is constant after centering); "
            "there is no nontrivial path to solve"
        )
    lambdas = np.geomspace(lmax, lmax * grid.min_ratio, grid.count)

    ws = _Workspace(design)
    p, K = design.p, design.spec.dim
    coefs = np.empty((grid.count, 1 + p * K))
    actives: list[Submodel] = []
    sweeps = np.empty(grid.count, dtype=int)
    converged = np.empty(grid.count, dtype=bool)
    a = None
    over_cap = 0
    n_done = grid.count
    for i, lam in enumerate(lambdas):
        a, info = ws.solve(Y, float(lam), weights, opts, start=a)
        coefs[i] = a
        actives.append(active_set(a, p, K))
        sweeps[i] = info.sweeps
        converged[i] = info.converged
        if stop_active_above is not None:
            over_cap = over_cap + 1 if actives[-1].size > stop_active_above else 0
            if over_cap >= 2:
                n_done = i + 1
                break
    coefs = coefs[:n_done]
    coefs.flags.writeable = False
    return PathResult(
        lambdas=lambdas[:n_done],
        coefficients=coefs,
        active_sets=tuple(actives),
        sweeps=sweeps[:n_done],
        converged=converged[:n_done],
    )


def path_records(
    path: PathResult,
    design: DesignMatrix,
    Y: np.ndarray,
    spec: PenaltySpec,
) -> list[BICRecord]:
    """Criterion record for every path entry, in path order."""
    return [
        bic_lambda(design, Y, path.coefficients[i], float(path.lambdas[i]), spec)
        for i in range(len(path))
    ]


def select_lambda(
    path: PathResult,
    design: DesignMatrix,
    Y: np.ndarray,
    spec: PenaltySpec,
    M: int,
) -> tuple[float, BICRecord]:
    """Arg-min of the criterion over path entries with |S_lambda| <= M.

    Entries whose active set exceeds M are discarded with a warning;
    ties go to the larger lambda (the sparser fit).
    """
    if len(path) == 0:
        raise ValueError("empty path")
    records = path_records(path, design, Y, spec)
    sizes = [s.size for s in path.active_sets]
    discarded = [float(path.lambdas[i]) for i, sz in enumerate(sizes) if sz > M]
    if len(discarded) == len(records):
        raise ValueError(
            f"no path entry has an active set of size <= {M}; "
            f"smallest size on the path is {min(sizes)}"
        )
    if discarded:
        shown = ", ".join(f"{lam:.4g}" for lam in discarded[:8])
        more = "" if len(discarded) <= 8 else f", ... ({len(discarded)} total)"
        warnings.warn(
            f"discarding {len(discarded)} path entries with more than {M} "
            f"active groups (lambda = {shown}{more})",
            PathFilterWarning,
            stacklevel=2,
        )
    best_i = None
    for i, rec in enumerate(records):  # descending lambda: first min wins ties
        if sizes[i] > M:
            continue
        if best_i is None or rec.criterion < records[best_i].criterion:
            best_i = i
    return float(path.lambdas[best_i]), records[best_i]


@dataclass(frozen=True)
class TwoStageResult:
    """Outcome of the two-stage pipeline: group LASSO with unit weights to
    get initial norms, then the adaptive refit with w_j = 1/||b_j||."""

    selected: Submodel
    coefficients: np.ndarray
    lambda1: float
    record1: BICRecord
    stage1: PathResult
    weights: Weights
    lambda2: float | None
    record2: BICRecord | None
    stage2: PathResult | None

    @property
    def converged(self) -> bool:
        ok = bool(self.stage1.converged.all())
        if self.stage2 is not None:
            ok = ok and bool(self.stage2.converged.all())
        return ok


def adaptive_group_lasso_select(
    design: DesignMatrix,
    Y: np.ndarray,
    penalty: PenaltySpec,
    M: int,
    grid: GridOptions | None = None,
    opts: SolveOptions | None = None,
    stage1_path: PathResult | None = None,
    truncate_paths: bool = False,
) -> TwoStageResult:
    """Run the full two-stage pipeline and pick the final model by the
    path criterion.

    ``stage1_path`` lets callers share the (weight-independent) unit
    path across several penalty variants on the same data.
    ``truncate_paths`` stops each path once its active sets exceed M
    (see :func:`solve_path`); bulk experiments use this because the
    skipped entries are filtered out of the selection anyway.
    """
    Y = np.asarray(Y, dtype=float).ravel()
    p, K = design.p, design.spec.dim
    cap = M if truncate_paths else None
    path1 = stage1_path if stage1_path is not None else solve_path(
        design, Y, unit_weights(p), grid=grid, opts=opts, stop_active_above=cap
    )
    lam1, rec1 = select_lambda(path1, design, Y, penalty, M)
    idx1 = int(np.nonzero(path1.lambdas == lam1)[0][0])
    btilde = path1.coefficients[idx1]
    w2 = adaptive_weights(btilde, p, K)

    if w2.n_finite == 0:
        # Stage one kept nothing: the final model is empty.
        coefs = np.zeros(1 + p * K)
        coefs[0] = math.sqrt(K) * float(np.mean(Y))
        return TwoStageResult(
            selected=Submodel(()),
            coefficients=coefs,
            lambda1=lam1,
            record1=rec1,
            stage1=path1,
            weights=w2,
            lambda2=None,
            record2=None,
            stage2=None,
        )

    path2 = solve_path(design, Y, w2, grid=grid, opts=opts, stop_active_above=cap)
    lam2, rec2 = select_lambda(path2, design, Y, penalty, M)
    idx2 = int(np.nonzero(path2.lambdas == lam2)[0][0])
    coefs = path2.coefficients[idx2]
    return TwoStageResult(
        selected=active_set(coefs, p, K),
        coefficients=coefs,
        lambda1=lam1,
        record1=rec1,
        stage1=path1,
        weights=w2,
        lambda2=lam2,
        record2=rec2,
        stage2=path2,
    )
