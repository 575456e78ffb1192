"""Command-line interface: fit, path, simulate, and basis subcommands.

Input CSV contract: header row required, response in the column named
by --y-col (default "y"), every other column a covariate in file
order, all cells numeric.  Output CSVs are comma-separated with a
header row, LF line endings, and floats printed with 17 significant
digits.  All files are written after computation finishes, via
write-then-rename.

Exit codes: 0 success, 2 malformed input or configuration, 3 search
budget exceeded, 4 solver non-convergence under --strict-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .basis import Submodel, auto_dim, build_design, make_spec, rescale_covariates
from .criterion import PenaltySpec, bic_submodel
from .fitting import component_estimate, eval_component, fit_submodel, recover_intercept
from .group_lasso import (
    GridOptions,
    SolveOptions,
    adaptive_group_lasso_select,
    path_records,
    select_lambda,
    solve_path,
    unit_weights,
)
from .simulation import (
    MethodSpec,
    SimConfig,
    report_csv_text,
    report_json_dict,
    run_experiment,
)
from .subset_search import (
    DEFAULT_BUDGET,
    BudgetExceededError,
    exhaustive_select,
    greedy_forward_select,
    screen_components,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BUDGET = 3
EXIT_NONCONVERGED = 4


class InputError(Exception):
    """Malformed input file, flag combination, or configuration."""


class NonConvergenceError(Exception):
    """Solver hit the sweep cap and --strict-convergence was set."""


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _read_input_csv(path: str, y_col: str):
    """Parse the input CSV into (X_raw, Y, covariate column names)."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise InputError(f"cannot read input file {path}: {exc}") from exc
    if not rows:
        raise InputError(f"input file {path} is empty")
    header = [h.strip() for h in rows[0]]
    if y_col not in header:
        raise InputError(
            f"input file {path} has no response column named {y_col!r} "
            f"(columns: {', '.join(header)})"
        )
    y_idx = header.index(y_col)
    x_names = [h for i, h in enumerate(header) if i != y_idx]
    if not x_names:
        raise InputError(f"input file {path} has no covariate columns")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and row[0].strip() == ""):
            continue
        if len(row) != len(header):
            raise InputError(
                f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}"
            )
        try:
            data.append([float(cell) for cell in row])
        except ValueError:
            bad = next(c for c in row if not _is_number(c))
            raise InputError(
                f"{path}:{lineno}: non-numeric cell {bad!r}"
            ) from None
    if not data:
        raise InputError(f"input file {path} has no data rows")
    mat = np.asarray(data, dtype=float)
    Y = mat[:, y_idx]
    X = np.delete(mat, y_idx, axis=1)
    return X, Y, x_names


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _resolve_dim(value: str, n: int, order: int) -> int:
    if value == "auto":
        return auto_dim(n, order)
    try:
        return int(value)
    except ValueError:
        raise InputError(
            f"--spline-k must be an integer or 'auto', got {value!r}"
        ) from None


def _penalty_from_args(args) -> PenaltySpec:
    return PenaltySpec(variant=args.penalty, cn=args.penalty_cn)


def _prepare_data(args):
    X_raw, Y, names = _read_input_csv(args.input, args.y_col)
    if X_raw.shape[0] < 10:
        raise InputError(
            f"need at least 10 data rows, got {X_raw.shape[0]}"
        )
    try:
        X, ranges = rescale_covariates(X_raw)
        dim = _resolve_dim(args.spline_k, X.shape[0], args.order)
        spec = make_spec(args.order, dim)
        design = build_design(X, spec, ranges)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return X, Y, design, names


def _grid_options(args) -> GridOptions:
    try:
        return GridOptions(count=args.grid_count, min_ratio=args.min_ratio)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _solve_options(args) -> SolveOptions:
    try:
        return SolveOptions(tol=args.tol, max_sweeps=args.max_sweeps)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_fit(args) -> int:
    X, Y, design, _ = _prepare_data(args)
    penalty = _penalty_from_args(args)
    M = args.max_size
    extra = {}

    if args.method == "exhaustive":
        selected = exhaustive_select(design, Y, M, penalty, budget=args.budget).selected
    elif args.method == "greedy":
        selected = greedy_forward_select(design, Y, M, penalty).selected
    elif args.method == "screen":
        keep = args.screen_keep or min(
            design.p, math.ceil(design.n / math.log(design.n))
        )
        kept = screen_components(X, Y, design.spec, keep)
        selected = exhaustive_select(
            design, Y, M, penalty, candidates=kept, budget=args.budget
        ).selected
    else:  # penalized
        result = adaptive_group_lasso_select(
            design, Y, penalty, M, grid=_grid_options(args), opts=_solve_options(args)
        )
        if args.strict_convergence and not result.converged:
            raise NonConvergenceError(
                "group lasso path contains unconverged entries"
            )
        selected = result.selected
        if result.lambda2 is not None:
            extra["lambda"] = result.lambda2
            extra["path_criterion"] = result.record2.criterion

    # The reported fit is always the least-squares refit on the selected
    # submodel, so outputs mean the same thing for every method.
    refit = fit_submodel(design, Y, selected)
    record = bic_submodel(design, Y, selected, penalty)
    K = design.spec.dim
    blocks = {}
    for pos, j in enumerate(selected.indices):
        block = refit.coefficients[1 + pos * K : 1 + (pos + 1) * K]
        blocks[str(j)] = [float(v) for v in block]
    payload = {
        "method": args.method,
        "penalty": args.penalty,
        "order": design.spec.order,
        "dim": K,
        "max_size": M,
        "n": design.n,
        "p": design.p,
        "selected": list(selected.indices),
        "intercept": recover_intercept(refit, K),
        "coefficients": blocks,
        "rss": refit.rss,
        "penalty_value": record.penalty_value,
        "criterion": record.criterion,
        **extra,
    }

    lines = ["component,x,value"]
    for j in selected.indices:
        est = component_estimate(design, refit, j)
        lo, hi = est.covariate_range
        grid = np.linspace(lo, hi, 201)
        vals = eval_component(est, grid)
        for x, v in zip(grid, vals):
            lines.append(f"{j},{_fmt(x)},{_fmt(v)}")

    os.makedirs(args.out_dir, exist_ok=True)
    _atomic_write(
        os.path.join(args.out_dir, "selected.json"),
        json.dumps(payload, indent=2, sort_keys=True) + "\n",
    )
    _atomic_write(
        os.path.join(args.out_dir, "components.csv"), "\n".join(lines) + "\n"
    )
    return EXIT_OK


def cmd_path(args) -> int:
    _, Y, design, _ = _prepare_data(args)
    penalty = _penalty_from_args(args)
    grid = _grid_options(args)
    opts = _solve_options(args)
    p = design.p

    if args.weights == "unit":
        path = solve_path(design, Y, unit_weights(p), grid=grid, opts=opts)
    else:
        result = adaptive_group_lasso_select(
            design, Y, penalty, args.max_size, grid=grid, opts=opts
        )
        path = result.stage2 if result.stage2 is not None else result.stage1
    if args.strict_convergence and not bool(path.converged.all()):
        raise NonConvergenceError("group lasso path contains unconverged entries")

    lam_hat, _ = select_lambda(path, design, Y, penalty, args.max_size)
    records = path_records(path, design, Y, penalty)
    lines = ["lambda,size,rss,penalty,criterion,converged,selected"]
    for i, rec in enumerate(records):
        lam = float(path.lambdas[i])
        lines.append(
            ",".join(
                [
                    _fmt(lam),
                    str(path.active_sets[i].size),
                    _fmt(rec.rss),
                    _fmt(rec.penalty_value),
                    _fmt(rec.criterion),
                    "true" if path.converged[i] else "false",
                    "true" if lam == lam_hat else "false",
                ]
            )
        )
    os.makedirs(args.out_dir, exist_ok=True)
    _atomic_write(os.path.join(args.out_dir, "path.csv"), "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_basis(args) -> int:
    if args.spline_k == "auto":
        raise InputError("basis dump needs an explicit --spline-k (no data to size it)")
    try:
        spec = make_spec(args.order, int(args.spline_k))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    from .basis import eval_raw_basis_grid

    grid = np.linspace(0.0, 1.0, 201)
    vals = eval_raw_basis_grid(spec, grid)
    header = "x," + ",".join(f"B_{k}" for k in range(1, spec.raw_dim + 1))
    lines = [header]
    for i, x in enumerate(grid):
        lines.append(",".join([_fmt(x)] + [_fmt(v) for v in vals[i]]))
    os.makedirs(args.out_dir, exist_ok=True)
    _atomic_write(os.path.join(args.out_dir, "basis.csv"), "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate: flat key-value config files with dotted section keys


_CONFIG_KEYS = {
    "n",
    "p",
    "s",
    "truth",
    "mu0",
    "noise.family",
    "noise.sd",
    "covariates.kind",
    "covariates.rho",
    "spline.order",
    "spline.dim",
    "spline.dim_scale",
    "search.methods",
    "search.max_size",
    "search.screen_keep",
    "penalty.variant",
    "penalty.cn",
    "lasso.grid_count",
    "lasso.min_ratio",
    "lasso.tol",
    "lasso.max_sweeps",
    "replications",
    "seed",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment; keys may repeat never."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if key in out:
            raise InputError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _cfg_get(kv: dict, key: str, conv, default=None):
    if key not in kv:
        if default is None:
            raise InputError(f"config: missing required key {key!r}")
        return default
    try:
        return conv(kv[key])
    except (TypeError, ValueError) as exc:
        raise InputError(f"config: bad value for {key!r}: {exc}") from exc


def build_sim_config(kv: dict[str, str]) -> SimConfig:
    unknown = sorted(set(kv) - _CONFIG_KEYS)
    if unknown:
        raise InputError(f"config: unknown key {unknown[0]!r}")

    default_penalty = PenaltySpec(
        variant=kv.get("penalty.variant", "semiparametric"),
        cn=_cfg_get(kv, "penalty.cn", float, default=math.nan) or None
        if "penalty.cn" in kv
        else None,
    )

    methods = []
    for entry in kv.get("search.methods", "penalized").split(","):
        entry = entry.strip()
        if not entry:
            continue
        if ":" in entry:
            name, variant = entry.split(":", 1)
            pen = PenaltySpec(variant=variant.strip(), cn=default_penalty.cn)
        else:
            name, pen = entry, default_penalty
        methods.append(MethodSpec(method=name.strip(), penalty=pen))
    if not methods:
        raise InputError("config: search.methods lists no methods")

    truth_entries = tuple(
        t.strip() for t in kv.get("truth", "").split(",") if t.strip()
    )

    dim_raw = kv.get("spline.dim", "auto")
    dim = None if dim_raw == "auto" else _cfg_get(kv, "spline.dim", int)
    screen_keep = (
        _cfg_get(kv, "search.screen_keep", int) if "search.screen_keep" in kv else None
    )

    config = SimConfig(
        n=_cfg_get(kv, "n", int),
        p=_cfg_get(kv, "p", int),
        s=_cfg_get(kv, "s", int),
        truth=truth_entries,
        mu0=_cfg_get(kv, "mu0", float, default=0.0),
        noise_family=kv.get("noise.family", "gaussian"),
        noise_sd=_cfg_get(kv, "noise.sd", float, default=1.0),
        covariates=kv.get("covariates.kind", "iid-uniform"),
        rho=_cfg_get(kv, "covariates.rho", float, default=0.0),
        order=_cfg_get(kv, "spline.order", int, default=4),
        dim=dim,
        dim_scale=_cfg_get(kv, "spline.dim_scale", float, default=2.0),
        methods=tuple(methods),
        max_size=_cfg_get(kv, "search.max_size", int, default=10),
        screen_keep=screen_keep,
        grid=GridOptions(
            count=_cfg_get(kv, "lasso.grid_count", int, default=100),
            min_ratio=_cfg_get(kv, "lasso.min_ratio", float, default=1e-3),
        ),
        solve=SolveOptions(
            tol=_cfg_get(kv, "lasso.tol", float, default=1e-7),
            max_sweeps=_cfg_get(kv, "lasso.max_sweeps", int, default=1000),
        ),
        replications=_cfg_get(kv, "replications", int, default=100),
        seed=_cfg_get(kv, "seed", int, default=0),
    )
    try:
        config.validate()
    except ValueError as exc:
        raise InputError(f"config: {exc}") from exc
    return config


def cmd_simulate(args) -> int:
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config file {args.config}: {exc}") from exc
    kv = parse_config_text(text)
    try:
        config = build_sim_config(kv)
    except ValueError as exc:
        raise InputError(f"config: {exc}") from exc
    if args.seed is not None:
        config = SimConfig(**{**config.__dict__, "seed": args.seed})
        config.validate()

    report = run_experiment(config, n_jobs=args.jobs)
    os.makedirs(args.out_dir, exist_ok=True)
    _atomic_write(os.path.join(args.out_dir, "report.csv"), report_csv_text(report))
    _atomic_write(
        os.path.join(args.out_dir, "report.json"),
        json.dumps(report_json_dict(report), indent=2, sort_keys=True) + "\n",
    )
    return EXIT_OK


def _add_shared_flags(sub, with_input=True):
    if with_input:
        sub.add_argument("--input", required=True, help="input CSV path")
        sub.add_argument("--y-col", default="y", help="response column name")
    sub.add_argument("--out-dir", default=".", help="output directory")
    sub.add_argument("--order", type=int, default=4, help="spline order q")
    sub.add_argument(
        "--spline-k",
        default="auto",
        help="per-component columns K, or 'auto' for max(q-1, ceil(2 n^0.2))",
    )
    sub.add_argument(
        "--penalty",
        choices=["semiparametric", "classic", "scaled"],
        default="semiparametric",
    )
    sub.add_argument("--penalty-cn", type=float, default=None,
                     help="C_n constant for the scaled penalty")
    sub.add_argument("--max-size", type=int, default=10, help="size cap M")
    sub.add_argument("--seed", type=int, default=None)


def _add_path_flags(sub):
    sub.add_argument("--grid-count", type=int, default=100)
    sub.add_argument("--min-ratio", type=float, default=1e-3)
    sub.add_argument("--tol", type=float, default=1e-7)
    sub.add_argument("--max-sweeps", type=int, default=1000)
    sub.add_argument("--strict-convergence", action="store_true",
                     help="fail (exit 4) if any path entry did not converge")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sambic",
        description="BIC-type model selection for sparse additive models",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser("fit", help="select and fit a submodel from CSV data")
    _add_shared_flags(fit)
    fit.add_argument(
        "--method",
        choices=["exhaustive", "greedy", "penalized", "screen"],
        default="exhaustive",
    )
    fit.add_argument("--screen-keep", type=int, default=None)
    fit.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    _add_path_flags(fit)
    fit.set_defaults(func=cmd_fit)

    path = subs.add_parser("path", help="export a lambda path with criterion values")
    _add_shared_flags(path)
    path.add_argument("--weights", choices=["adaptive", "unit"], default="adaptive")
    _add_path_flags(path)
    path.set_defaults(func=cmd_path)

    sim = subs.add_parser("simulate", help="run a replicated selection experiment")
    sim.add_argument("--config", required=True, help="experiment config file")
    sim.add_argument("--out-dir", default=".")
    sim.add_argument("--seed", type=int, default=None, help="override config seed")
    sim.add_argument("--jobs", type=int, default=1)
    sim.set_defaults(func=cmd_simulate)

    basis = subs.add_parser("basis", help="dump raw basis values on a grid")
    basis.add_argument("--out-dir", default=".")
    basis.add_argument("--order", type=int, default=4)
    basis.add_argument("--spline-k", required=True)
    basis.add_argument("--seed", type=int, default=None)
    basis.set_defaults(func=cmd_basis)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
