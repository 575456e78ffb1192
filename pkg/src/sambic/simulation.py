"""Sparse additive-model data generation and replicated selection experiments.

Data model: Y_i = mu0 + sum_{j<=s} f_j(X_ij) + eps_i with covariates in
[0, 1]^p and the true model fixed to the first s components.  The
default truth cycles through three mean-zero functions on U[0, 1]:

    linear     5x - 2.5
    quadratic  3(2x - 1)^2 - 1
    sine       2 sin(2 pi x)

Reproducibility: replication i draws from a counter-based Philox
generator keyed by SeedSequence(entropy=base_seed, spawn_key=(i,)), so
serial and parallel runs see identical streams.  Within a replication
the draw order is covariates first, then noise.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .basis import Submodel, auto_dim, build_design, make_spec
from .criterion import PenaltySpec
from .fitting import component_estimate, eval_component, fit_submodel
from .group_lasso import (
    GridOptions,
    PathFilterWarning,
    SolveOptions,
    adaptive_group_lasso_select,
    solve_path,
    unit_weights,
)
from .subset_search import (
    default_screen_keep,
    exhaustive_select,
    greedy_forward_select,
    screen_components,
)

__all__ = [
    "TRUTH_FUNCTIONS",
    "NOISE_FAMILIES",
    "COVARIATE_KINDS",
    "SEARCH_METHODS",
    "tabulated_function",
    "MethodSpec",
    "SimConfig",
    "MethodRow",
    "SelectionReport",
    "noise_sample",
    "replication_rng",
    "gen_dataset",
    "run_experiment",
    "report_csv_text",
    "report_json_dict",
]

TRUTH_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "linear": lambda x: 5.0 * x - 2.5,
    "quadratic": lambda x: 3.0 * (2.0 * x - 1.0) ** 2 - 1.0,
    "sine": lambda x: 2.0 * np.sin(2.0 * np.pi * x),
}
_DEFAULT_TRUTH_CYCLE = ("linear", "quadratic", "sine")

NOISE_FAMILIES = ("gaussian", "uniform", "rademacher")
COVARIATE_KINDS = ("iid-uniform", "gaussian-copula")
SEARCH_METHODS = ("exhaustive", "greedy", "penalized", "screen")


def tabulated_function(xs: Sequence[float], ys: Sequence[float]):
    """Piecewise-linear component function from a value table on [0, 1]."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise ValueError("need matching 1-d tables with at least 2 points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("table abscissae must be strictly increasing")
    return lambda x: np.interp(x, xs, ys)


@dataclass(frozen=True)
class MethodSpec:
    """One selection strategy to score: a method name plus its penalty."""

    method: str
    penalty: PenaltySpec = PenaltySpec()

    def __post_init__(self):
        if self.method not in SEARCH_METHODS:
            raise ValueError(
                f"unknown method {self.method!r}; expected one of {SEARCH_METHODS}"
            )

    @property
    def label(self) -> str:
        return f"{self.method}:{self.penalty.variant}"


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    s: int
    truth: tuple = ()  # empty means the default cycle; else s names/callables
    mu0: float = 0.0
    noise_family: str = "gaussian"
    noise_sd: float = 1.0
    covariates: str = "iid-uniform"
    rho: float = 0.0
    order: int = 4
    dim: int | None = None  # None resolves to auto_dim(n, order, dim_scale)
    dim_scale: float = 2.0
    methods: tuple[MethodSpec, ...] = (MethodSpec("penalized"),)
    max_size: int = 10
    screen_keep: int | None = None
    grid: GridOptions = field(default_factory=GridOptions)
    solve: SolveOptions = field(default_factory=SolveOptions)
    replications: int = 100
    seed: int = 0

    def validate(self) -> None:
        if self.n < 2:
            raise ValueError(f"n: need n >= 2, got {self.n}")
        if self.p < 1:
            raise ValueError(f"p: need p >= 1, got {self.p}")
        if not 0 <= self.s <= self.p:
            raise ValueError(f"s: need 0 <= s <= p = {self.p}, got {self.s}")
        if self.truth and len(self.truth) != self.s:
            raise ValueError(
                f"truth: need {self.s} entries to match s, got {len(self.truth)}"
            )
        for entry in self.truth:
            if isinstance(entry, str) and entry not in TRUTH_FUNCTIONS:
                raise ValueError(
                    f"truth: unknown function {entry!r}; "
                    f"known names: {sorted(TRUTH_FUNCTIONS)}"
                )
        if self.noise_family not in NOISE_FAMILIES:
            raise ValueError(
                f"noise.family: unknown family {self.noise_family!r}; "
                f"expected one of {NOISE_FAMILIES}"
            )
        if self.noise_sd < 0:
            raise ValueError(f"noise.sd: need sd >= 0, got {self.noise_sd}")
        if self.covariates not in COVARIATE_KINDS:
            raise ValueError(
                f"covariates.kind: unknown kind {self.covariates!r}; "
                f"expected one of {COVARIATE_KINDS}"
            )
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"covariates.rho: need 0 <= rho < 1, got {self.rho}")
        if not 0 <= self.max_size <= self.p:
            raise ValueError(
                f"search.max_size: need 0 <= M <= p = {self.p}, got {self.max_size}"
            )
        if self.screen_keep is not None and not 1 <= self.screen_keep <= self.p:
            raise ValueError(
                f"search.screen_keep: need 1 <= keep <= p, got {self.screen_keep}"
            )
        if self.replications < 1:
            raise ValueError(f"replications: need >= 1, got {self.replications}")
        if not self.methods:
            raise ValueError("search.methods: need at least one method")
        # Spline parameters validated by construction:
        make_spec(self.order, self.resolved_dim())

    def resolved_dim(self) -> int:
        if self.dim is not None:
            return self.dim
        return auto_dim(self.n, self.order, self.dim_scale)

    def resolved_screen_keep(self) -> int:
        if self.screen_keep is not None:
            return self.screen_keep
        return default_screen_keep(self.n, self.p)

    def truth_callables(self) -> list[Callable[[np.ndarray], np.ndarray]]:
        if self.truth:
            entries = self.truth
        else:
            entries = tuple(
                _DEFAULT_TRUTH_CYCLE[i % len(_DEFAULT_TRUTH_CYCLE)]
                for i in range(self.s)
            )
        return [TRUTH_FUNCTIONS[e] if isinstance(e, str) else e for e in entries]

    def truth_names(self) -> list[str]:
        if self.truth:
            return [e if isinstance(e, str) else "custom" for e in self.truth]
        return [
            _DEFAULT_TRUTH_CYCLE[i % len(_DEFAULT_TRUTH_CYCLE)]
            for i in range(self.s)
        ]

    def echo(self) -> dict:
        """Flat key-value view of the resolved configuration."""
        return {
            "n": self.n,
            "p": self.p,
            "s": self.s,
            "truth": ",".join(self.truth_names()),
            "mu0": self.mu0,
            "noise.family": self.noise_family,
            "noise.sd": self.noise_sd,
            "covariates.kind": self.covariates,
            "covariates.rho": self.rho,
            "spline.order": self.order,
            "spline.dim": self.resolved_dim(),
            "search.methods": ",".join(m.label for m in self.methods),
            "search.max_size": self.max_size,
            "search.screen_keep": self.resolved_screen_keep(),
            "lasso.grid_count": self.grid.count,
            "lasso.min_ratio": self.grid.min_ratio,
            "lasso.tol": self.solve.tol,
            "lasso.max_sweeps": self.solve.max_sweeps,
            "replications": self.replications,
            "seed": self.seed,
        }


def noise_sample(family: str, sd: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Mean-zero i.i.d. draws with variance sd^2 from a sub-Gaussian family."""
    if sd < 0:
        raise ValueError(f"need sd >= 0, got {sd}")
    if family == "gaussian":
        return rng.normal(0.0, sd, n)
    if family == "uniform":
        half = math.sqrt(3.0) * sd
        return rng.uniform(-half, half, n)
    if family == "rademacher":
        return sd * (2.0 * rng.integers(0, 2, n) - 1.0)
    raise ValueError(f"unknown noise family {family!r}; expected one of {NOISE_FAMILIES}")


def replication_rng(base_seed: int, rep_index: int) -> np.random.Generator:
    """Counter-based stream for one replication; independent across indices."""
    seq = np.random.SeedSequence(entropy=base_seed, spawn_key=(rep_index,))
    return np.random.Generator(np.random.Philox(seq))


def _draw_covariates(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    n, p = config.n, config.p
    if config.covariates == "iid-uniform":
        return rng.random((n, p))
    # Gaussian copula with AR(1) latent correlation rho^|j-k|, mapped
    # through the standard normal CDF so margins stay uniform.
    e = rng.standard_normal((n, p))
    z = np.empty((n, p))
    z[:, 0] = e[:, 0]
    rho = config.rho
    mix = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        z[:, j] = rho * z[:, j - 1] + mix * e[:, j]
    return ndtr(z)


def gen_dataset(config: SimConfig, rep_index: int):
    """Draw (X, Y, S0) for one replication; S0 is always {1, ..., s}."""
    config.validate()
    rng = replication_rng(config.seed, rep_index)
    X = _draw_covariates(config, rng)
    eps = noise_sample(config.noise_family, config.noise_sd, config.n, rng)
    Y = np.full(config.n, float(config.mu0))
    for i, f in enumerate(config.truth_callables()):
        Y += f(X[:, i])
    Y += eps
    return X, Y, Submodel(tuple(range(1, config.s + 1)))


@dataclass(frozen=True)
class MethodRow:
    method: str
    penalty: str
    exact_rate: float
    underfit_rate: float
    overfit_rate: float
    mean_size: float
    mean_est_error: float


@dataclass(frozen=True)
class SelectionReport:
    rows: tuple[MethodRow, ...]
    replications: int
    seed: int
    config: dict


_EST_GRID = np.linspace(0.0, 1.0, 201)


def _estimation_error(design, Y, selected: Submodel, truth, s: int) -> float:
    """Grid-averaged integral of (fhat_j - f0_j)^2, summed over components
    that are truly active or were selected, using the least-squares
    refit on the selected submodel."""
    refit = fit_submodel(design, Y, selected)
    total = 0.0
    involved = sorted(set(selected.indices) | set(range(1, s + 1)))
    for j in involved:
        fhat = (
            eval_component(component_estimate(design, refit, j), _EST_GRID)
            if j in selected.indices
            else np.zeros_like(_EST_GRID)
        )
        f0 = truth[j - 1](_EST_GRID) if j <= s else np.zeros_like(_EST_GRID)
        diff = fhat - f0
        total += float(np.mean(diff * diff))
    return total


def _select_with_method(design, X, Y, config: SimConfig, mspec: MethodSpec,
                        stage1_cache: dict) -> Submodel:
    M = config.max_size
    if mspec.method == "exhaustive":
        return exhaustive_select(design, Y, M, mspec.penalty).selected
    if mspec.method == "greedy":
        return greedy_forward_select(design, Y, M, mspec.penalty).selected
    if mspec.method == "screen":
        kept = screen_components(X, Y, design.spec, config.resolved_screen_keep())
        return exhaustive_select(design, Y, M, mspec.penalty, candidates=kept).selected
    # penalized: the unit-weight stage-one path does not depend on the
    # penalty variant, so it is shared across penalized methods.  Paths
    # are truncated at the size cap; larger active sets are filtered
    # out of the selection anyway.
    if "stage1" not in stage1_cache:
        stage1_cache["stage1"] = solve_path(
            design,
            Y,
            unit_weights(design.p),
            grid=config.grid,
            opts=config.solve,
            stop_active_above=M,
        )
    result = adaptive_group_lasso_select(
        design,
        Y,
        mspec.penalty,
        M,
        grid=config.grid,
        opts=config.solve,
        stage1_path=stage1_cache["stage1"],
        truncate_paths=True,
    )
    return result.selected


def _run_replication(config: SimConfig, rep_index: int) -> list[dict]:
    X, Y, S0 = gen_dataset(config, rep_index)
    spec = make_spec(config.order, config.resolved_dim())
    design = build_design(X, spec)
    truth = config.truth_callables()
    stage1_cache: dict = {}
    out = []
    with warnings.catch_warnings():
        # Size-capped path entries are expected in bulk experiments.
        warnings.simplefilter("ignore", PathFilterWarning)
        for mspec in config.methods:
            selected = _select_with_method(design, X, Y, config, mspec, stage1_cache)
            out.append(
                {
                    "exact": selected == S0,
                    "underfit": not selected.contains(S0),
                    "overfit": selected.contains(S0) and selected != S0,
                    "size": selected.size,
                    "est_error": _estimation_error(design, Y, selected, truth, config.s),
                }
            )
    return out


def run_experiment(config: SimConfig, n_jobs: int = 1) -> SelectionReport:
    """Run all replications and aggregate selection rates per method.

    Replications are independent (pre-derived RNG streams) and may run
    on a thread pool; aggregation always happens in replication order,
    so the report is identical for any ``n_jobs``.  A failed
    replication aborts the experiment with its index in the message.
    """
    config.validate()
    R = config.replications

    def run_one(r: int) -> list[dict]:
        try:
            return _run_replication(config, r)
        except Exception as exc:
            raise RuntimeError(f"replication {r} failed: {exc}") from exc

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            per_rep = list(pool.map(run_one, range(R)))
    else:
        per_rep = [run_one(r) for r in range(R)]

    rows = []
    for m, mspec in enumerate(config.methods):
        exact = sum(per_rep[r][m]["exact"] for r in range(R))
        under = sum(per_rep[r][m]["underfit"] for r in range(R))
        over = sum(per_rep[r][m]["overfit"] for r in range(R))
        sizes = sum(per_rep[r][m]["size"] for r in range(R))
        err = sum(per_rep[r][m]["est_error"] for r in range(R))
        rows.append(
            MethodRow(
                method=mspec.method,
                penalty=mspec.penalty.variant,
                exact_rate=exact / R,
                underfit_rate=under / R,
                overfit_rate=over / R,
                mean_size=sizes / R,
                mean_est_error=err / R,
            )
        )
    return SelectionReport(
        rows=tuple(rows),
        replications=R,
        seed=config.seed,
        config=config.echo(),
    )


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def report_csv_text(report: SelectionReport) -> str:
    """One row per method; floats printed with 17 significant digits."""
    lines = [
        "method,penalty,exact_rate,underfit_rate,overfit_rate,mean_size,mean_est_error"
    ]
    for row in report.rows:
        lines.append(
            ",".join(
                [
                    row.method,
                    row.penalty,
                    _fmt(row.exact_rate),
                    _fmt(row.underfit_rate),
                    _fmt(row.overfit_rate),
                    _fmt(row.mean_size),
                    _fmt(row.mean_est_error),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def report_json_dict(report: SelectionReport) -> dict:
    return {
        "config": report.config,
        "replications": report.replications,
        "seed": report.seed,
        "methods": [
            {
                "method": row.method,
                "penalty": row.penalty,
                "exact_rate": row.exact_rate,
                "underfit_rate": row.underfit_rate,
                "overfit_rate": row.overfit_rate,
                "mean_size": row.mean_size,
                "mean_est_error": row.mean_est_error,
            }
            for row in report.rows
        ],
    }
