"""Least-squares estimation on submodel designs and component reconstruction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import DesignMatrix, SplineSpec, Submodel, block_slice, eval_raw_basis_grid, submatrix

__all__ = [
    "FitResult",
    "ComponentEstimate",
    "fit_least_squares",
    "fit_submodel",
    "recover_intercept",
    "component_estimate",
    "eval_component",
    "active_set",
]

# Singular values below RANK_RCOND times the largest are treated as zero.
RANK_RCOND = 1e-10


@dataclass(frozen=True)
class FitResult:
    """Least-squares solution on a submodel's design columns.

    ``coefficients`` follows the submodel layout: entry 0 is
    sqrt(K) * intercept, then one block of K entries per included
    component, in index order.  ``rss`` is the achieved residual sum
    of squares.  When the design is rank deficient the minimum-norm
    solution is returned and ``rank_deficient`` is set.
    """

    submodel: Submodel | None
    coefficients: np.ndarray
    rss: float
    rank_deficient: bool


def fit_least_squares(
    Z_S: np.ndarray,
    Y: np.ndarray,
    submodel: Submodel | None = None,
) -> FitResult:
    """Minimize ||Y - Z_S a||^2, returning the minimum-norm minimizer.

    Effective rank is decided by singular values relative to the
    largest (threshold RANK_RCOND); a deficient rank is flagged, not
    an error, because exhaustive search routinely visits collinear
    submodels.
    """
    Z_S = np.asarray(Z_S, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    if Z_S.ndim != 2 or Z_S.shape[0] != Y.shape[0]:
        raise ValueError(
            f"design has shape {Z_S.shape} but response has {Y.shape[0]} entries"
        )
    coef, _, rank, _ = np.linalg.lstsq(Z_S, Y, rcond=RANK_RCOND)
    resid = Y - Z_S @ coef
    rss = float(resid @ resid)
    return FitResult(
        submodel=submodel,
        coefficients=coef,
        rss=rss,
        rank_deficient=rank < Z_S.shape[1],
    )


def fit_submodel(design: DesignMatrix, Y: np.ndarray, S: Submodel) -> FitResult:
    """Least squares on the intercept plus the blocks of S."""
    return fit_least_squares(submatrix(design, S), Y, submodel=S)


def recover_intercept(fit: FitResult, K: int) -> float:
    """Undo the sqrt(K) scaling stored in coefficient slot 0."""
    return float(fit.coefficients[0]) / math.sqrt(K)


@dataclass(frozen=True)
class ComponentEstimate:
    """One fitted component function, evaluable on the original covariate scale.

    Evaluation reuses the training-sample centering offsets; points
    outside the training range are clamped to [0, 1] after rescaling.
    """

    component: int
    coefficients: np.ndarray
    spec: SplineSpec
    offsets: np.ndarray
    covariate_range: tuple[float, float]


def component_estimate(design: DesignMatrix, fit: FitResult, j: int) -> ComponentEstimate:
    """Extract component j's block from a fit on this design.

    Components outside the fitted submodel get an all-zero block, so
    their estimate is identically zero.
    """
    if not 1 <= j <= design.p:
        raise ValueError(f"component {j} out of range for p = {design.p}")
    K = design.spec.dim
    if fit.submodel is None:
        raise ValueError("fit carries no submodel; cannot locate blocks")
    if j in fit.submodel.indices:
        pos = fit.submodel.indices.index(j)
        block = np.array(fit.coefficients[1 + pos * K : 1 + (pos + 1) * K])
    else:
        block = np.zeros(K)
    lo, hi = design.covariate_ranges[j - 1]
    return ComponentEstimate(
        component=j,
        coefficients=block,
        spec=design.spec,
        offsets=np.array(design.centering_offsets[j - 1]),
        covariate_range=(float(lo), float(hi)),
    )


def eval_component(est: ComponentEstimate, x) -> np.ndarray | float:
    """Evaluate sum_k b_k (B_k(u) - offset_k) at original-scale points x."""
    scalar = np.isscalar(x)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = est.covariate_range
    u = (x - lo) / (hi - lo) if hi > lo else np.zeros_like(x)
    np.clip(u, 0.0, 1.0, out=u)
    K = est.spec.dim
    raw = eval_raw_basis_grid(est.spec, u)
    vals = (raw[:, :K] - est.offsets[:K]) @ est.coefficients
    return float(vals[0]) if scalar else vals


def active_set(coefficients: np.ndarray, p: int, K: int) -> Submodel:
    """Components whose coefficient block is not identically zero.

    ``coefficients`` uses the full layout (intercept slot plus p
    blocks of K).
    """
    coefficients = np.asarray(coefficients)
    if coefficients.shape[0] != 1 + p * K:
        raise ValueError(
            f"expected {1 + p * K} coefficients for p={p}, K={K}, "
            f"got {coefficients.shape[0]}"
        )
    active = [
        j
        for j in range(1, p + 1)
        if np.any(coefficients[block_slice(j, K)] != 0.0)
    ]
    return Submodel(tuple(active))
