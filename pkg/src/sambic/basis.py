"""Centered B-spline design matrices for additive regression.

Conventions used throughout the package:

* A spline of ``order`` q is a piecewise polynomial of degree q - 1 on
  [0, 1], built on a clamped knot vector (boundary knots repeated q
  times) with equally spaced internal knots.
* ``dim`` K is the number of columns each covariate contributes to the
  design *after* centering; the raw normalized B-spline basis has
  K + 1 functions, and the last one is dropped when centering (any
  single function is redundant once the empirical mean constraint is
  imposed, because the raw basis sums to one pointwise).
* The assembled design has 1 + p*K columns: a constant intercept
  column with every entry 1/sqrt(K), followed by p blocks of K
  mean-centered basis columns.  Component indices are 1-based
  everywhere in the public API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SplineSpec",
    "DesignMatrix",
    "Submodel",
    "make_spec",
    "auto_dim",
    "eval_raw_basis",
    "eval_raw_basis_grid",
    "rescale_covariates",
    "build_design",
    "submatrix",
    "block_slice",
]


@dataclass(frozen=True)
class SplineSpec:
    """Clamped B-spline configuration on [0, 1] with equally spaced knots."""

    order: int
    dim: int
    knots: np.ndarray

    @property
    def internal_knot_count(self) -> int:
        return self.dim - self.order + 1

    @property
    def raw_dim(self) -> int:
        """Size of the raw (uncentered) basis."""
        return self.dim + 1


@dataclass(frozen=True)
class Submodel:
    """A subset of component indices, 1-based, strictly increasing."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(j) for j in self.indices)
        object.__setattr__(self, "indices", idx)
        if any(j < 1 for j in idx):
            raise ValueError(f"component indices are 1-based, got {idx}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices must be strictly increasing, got {idx}")

    @property
    def size(self) -> int:
        return len(self.indices)

    def contains(self, other: "Submodel") -> bool:
        return set(other.indices) <= set(self.indices)

    def __str__(self) -> str:
        return "{" + ",".join(str(j) for j in self.indices) + "}"


EMPTY_SUBMODEL = Submodel(())


@dataclass(frozen=True)
class DesignMatrix:
    """Intercept column plus p centered B-spline blocks.

    ``values`` is n x (1 + p*K); column 0 is constant 1/sqrt(K).
    ``centering_offsets`` holds the sample means of all raw basis
    values (p x (K+1)); the first K entries of each row are the
    offsets actually subtracted from the kept columns.
    ``covariate_ranges`` are the (min, max) pairs used to map each
    covariate into [0, 1], needed to evaluate fitted components on the
    original scale.
    """

    n: int
    p: int
    spec: SplineSpec
    values: np.ndarray
    centering_offsets: np.ndarray
    covariate_ranges: np.ndarray

    def block(self, j: int) -> np.ndarray:
        """Columns of component j (1-based), as a view."""
        return self.values[:, block_slice(j, self.spec.dim)]


def block_slice(j: int, dim: int) -> slice:
    """Column slice of component j (1-based) in the full layout."""
    if j < 1:
        raise ValueError(f"component indices are 1-based, got {j}")
    return slice(1 + (j - 1) * dim, 1 + j * dim)


def make_spec(order: int, dim: int) -> SplineSpec:
    """Build a clamped, equally spaced knot vector for the given order and dim.

    Requires order >= 2 and dim >= order - 1.  The number of internal
    knots is dim - order + 1, placed at k/(dim - order + 2).
    """
    order = int(order)
    dim = int(dim)
    if order < 2:
        raise ValueError(f"spline order must be >= 2, got {order}")
    if dim < order - 1:
        raise ValueError(
            f"dim must be >= order - 1 = {order - 1}, got {dim}"
        )
    n_internal = dim - order + 1
    internal = np.arange(1, n_internal + 1, dtype=float) / (n_internal + 1)
    knots = np.concatenate([np.zeros(order), internal, np.ones(order)])
    knots.flags.writeable = False
    return SplineSpec(order=order, dim=dim, knots=knots)


def auto_dim(n: int, order: int, scale: float = 2.0) -> int:
    """Default per-component dimension max(order - 1, ceil(scale * n^(1/5)))."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return max(order - 1, math.ceil(scale * n ** 0.2))


def eval_raw_basis_grid(spec: SplineSpec, x: np.ndarray) -> np.ndarray:
    """Evaluate all raw basis functions at each point of ``x``.

    Returns an array of shape (len(x), spec.raw_dim).  Uses the
    Cox-de Boor recursion; x = 1 is treated as the limit from the
    left so the last basis function evaluates to 1 there instead of
    producing a zero row.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ValueError("x must be one-dimensional")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("basis evaluation points must lie in [0, 1]")

    t = spec.knots
    q = spec.order
    deg = q - 1
    nb = spec.raw_dim
    m = x.shape[0]

    span = np.searchsorted(t, x, side="right") - 1
    np.clip(span, deg, nb - 1, out=span)

    # Triangular recursion over the q local basis values at each point.
    vals = np.zeros((m, q))
    vals[:, 0] = 1.0
    left = np.zeros((m, q))
    right = np.zeros((m, q))
    for j in range(1, q):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(m)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            safe = np.where(denom == 0.0, 1.0, denom)
            temp = np.where(denom == 0.0, 0.0, vals[:, r] / safe)
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved

    out = np.zeros((m, nb))
    rows = np.arange(m)[:, None]
    cols = span[:, None] - deg + np.arange(q)[None, :]
    out[rows, cols] = vals
    return out


def eval_raw_basis(spec: SplineSpec, x: float) -> np.ndarray:
    """Evaluate the raw basis at a single point, returning raw_dim values."""
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    return eval_raw_basis_grid(spec, np.array([x]))[0]


def rescale_covariates(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-max rescale each column of ``raw`` to [0, 1].

    Returns the rescaled matrix and a (p, 2) array of the original
    (min, max) per column.  A constant column is an error since its
    range cannot be normalized.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ValueError("covariate matrix must be two-dimensional")
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    flat = np.nonzero(hi <= lo)[0]
    if flat.size:
        raise ValueError(
            f"covariate column {flat[0] + 1} is constant (zero range); "
            "cannot rescale to [0, 1]"
        )
    scaled = (raw - lo) / (hi - lo)
    # Guard against roundoff pushing entries a hair outside [0, 1].
    np.clip(scaled, 0.0, 1.0, out=scaled)
    return scaled, np.column_stack([lo, hi])


def build_design(
    X: np.ndarray,
    spec: SplineSpec,
    ranges: np.ndarray | None = None,
) -> DesignMatrix:
    """Assemble the centered block design from covariates in [0, 1]^p.

    Block j, column k holds B_k(X_ij) minus the sample mean of
    B_k(X_.j), for k = 1..K; the last raw basis function is dropped.
    ``ranges`` records the original covariate (min, max) pairs when X
    came out of :func:`rescale_covariates`; defaults to (0, 1) per
    column for data generated directly on the unit interval.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be two-dimensional")
    n, p = X.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows, got {n}")
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError("covariates must lie in [0, 1]; rescale first")
    if ranges is None:
        ranges = np.tile([0.0, 1.0], (p, 1))
    else:
        ranges = np.asarray(ranges, dtype=float)
        if ranges.shape != (p, 2):
            raise ValueError(f"ranges must have shape ({p}, 2)")

    K = spec.dim
    values = np.empty((n, 1 + p * K))
    values[:, 0] = 1.0 / math.sqrt(K)
    offsets = np.empty((p, spec.raw_dim))
    for j in range(p):
        raw = eval_raw_basis_grid(spec, X[:, j])
        mu = raw.mean(axis=0)
        offsets[j] = mu
        values[:, 1 + j * K : 1 + (j + 1) * K] = raw[:, :K] - mu[:K]

    for arr in (values, offsets, ranges):
        arr.flags.writeable = False
    return DesignMatrix(
        n=n,
        p=p,
        spec=spec,
        values=values,
        centering_offsets=offsets,
        covariate_ranges=ranges,
    )


def submatrix(design: DesignMatrix, S: Submodel) -> np.ndarray:
    """Intercept column plus the blocks of S, in index order."""
    if S.size and S.indices[-1] > design.p:
        raise ValueError(
            f"submodel index {S.indices[-1]} out of range for p = {design.p}"
        )
    K = design.spec.dim
    cols = [0]
    for j in S.indices:
        cols.extend(range(1 + (j - 1) * K, 1 + j * K))
    return design.values[:, cols]
