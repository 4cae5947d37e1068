"""Command-line interface.

Exit status: 0 on success, 2 for unusable input (files, flags, invalid
models), 3 when a computation or a fit fails.
"""

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import dependence as dep
from .errors import (
    CSPHError,
    DimensionError,
    DomainError,
    FitError,
    InputError,
    NumericalError,
    SingularMatrixError,
    ValidationError,
)
from .inference import BivariateDataset, FitOptions, ModelStructure, fit
from .io import load_model, read_dataset, read_points, save_json, write_rows
from .model import joint_cdf, joint_pdf
from .risk import regular_variation_index, risk_report, shock_quantile
from .simulation import sample_dataset, write_csv

EXIT_INPUT = 2
EXIT_NUMERIC = 3
DEFAULT_GRID_POINTS = 50


def parse_grid(spec):
    """``"start:stop:num"`` (inclusive linspace) or a comma-separated list.

    An empty string gives an empty grid.
    """
    spec = spec.strip()
    if not spec:
        return np.zeros(0)
    try:
        if ":" in spec:
            start, stop, num = spec.split(":")
            return np.linspace(float(start), float(stop), int(num))
        return np.array([float(v) for v in spec.split(",")])
    except ValueError:
        raise InputError(f"cannot parse grid {spec!r}; use start:stop:num or a comma list") from None


def _default_shock_grid(m):
    return np.linspace(0.0, shock_quantile(m, 0.99), DEFAULT_GRID_POINTS)


def cmd_simulate(args):
    if args.n < 1:
        raise InputError(f"--n must be at least 1, got {args.n}")
    m = load_model(args.model)
    records = sample_dataset(m, args.n, args.seed)
    write_csv(args.out, records, latent=args.latent)
    print(f"wrote {args.n} records to {args.out}")


def _log_transform(data, lower):
    x1, x2 = data.x1, data.x2
    keep = (x1 > lower) & (x2 > lower)
    if not keep.any():
        raise InputError(f"no observation has both coordinates above {lower}")
    with np.errstate(divide="ignore"):
        return BivariateDataset(np.log(x1[keep]), np.log(x2[keep])), int((~keep).sum())


def cmd_fit(args):
    data = read_dataset(args.data)
    dropped = 0
    if args.log_transform:
        data, dropped = _log_transform(data, args.lower)
    elif args.lower is not None:
        keep = (data.x1 > args.lower) & (data.x2 > args.lower)
        dropped = int((~keep).sum())
        data = BivariateDataset(data.x1[keep], data.x2[keep])
    if len(data) == 0:
        raise InputError("dataset is empty")
    if len(data) < 2:
        warnings.warn(f"only {len(data)} observation; the fit is degenerate", stacklevel=1)
    struct = ModelStructure(args.p0, args.p1, args.alpha)
    opts = FitOptions(
        max_iter=args.max_iter, n_starts=args.starts, seed=args.seed, threads=args.threads
    )
    result = fit(data, struct, options=opts)
    m = result.model.to_csph()
    out = result.to_dict()
    out["n_observations"] = len(data)
    out["n_dropped"] = dropped
    out["transform"] = {"log": bool(args.log_transform), "lower": args.lower}
    out["tail_index"] = [regular_variation_index(m, 1), regular_variation_index(m, 2)]
    save_json(args.out, out)
    print(f"loglik {result.loglik:.6f} after {result.iterations} iterations ({result.message})")
    if args.log_transform:
        print(f"tail indices of exp(X): {out['tail_index'][0]:.6g}, {out['tail_index'][1]:.6g}")


def cmd_risk(args):
    m = load_model(args.model)
    levels = parse_grid(args.levels)
    bad = [lvl for lvl in levels if not 0 < lvl < 1]
    if bad:
        raise InputError(f"levels must lie in (0, 1), got {bad[0]}")
    a_grid = _default_shock_grid(m) if args.a_grid is None else parse_grid(args.a_grid)
    theta_grid = parse_grid(args.vartheta_grid)
    report = risk_report(m, levels, a_grid, theta_grid)
    save_json(args.out, report.to_dict())
    if args.curves_dir and len(a_grid):
        os.makedirs(args.curves_dir, exist_ok=True)
        d = args.curves_dir
        write_rows(os.path.join(d, "cvar_cs_x1.csv"), ["a", "cvar_cs"], [(a, v) for a, v, _ in report.cvar_cs])
        write_rows(os.path.join(d, "cvar_cs_x2.csv"), ["a", "cvar_cs"], [(a, v) for a, _, v in report.cvar_cs])
        write_rows(os.path.join(d, "mtce_cs.csv"), ["a", "mtce_cs"], report.mtce_cs)
        write_rows(os.path.join(d, "mtcov_cs.csv"), ["a", "mtcov_cs"], report.mtcov_cs)
        if report.erm:
            write_rows(os.path.join(d, "erm.csv"), ["a", "vartheta", "erm_x1", "erm_x2"], report.erm)
    print(f"wrote risk report to {args.out}")


def cmd_dependence(args):
    m = load_model(args.model)
    grid = _default_shock_grid(m) if args.t_grid is None else parse_grid(args.t_grid)
    header = (
        ["t"]
        + [f"pi_{k}" for k in range(m.p1)]
        + ["mean1", "mean2", "var1", "var2", "cross", "pearson", "kendall", "spearman"]
    )
    rows = []
    for t in grid:
        w = dep.entry_weights(m, t).weights
        rows.append(
            [t, *w]
            + [
                dep.cond_mean(m, 1, t),
                dep.cond_mean(m, 2, t),
                dep.cond_var(m, 1, t),
                dep.cond_var(m, 2, t),
                dep.cond_cross_moment(m, t),
                dep.cond_pearson(m, t),
                dep.cond_kendall(m, t),
                dep.cond_spearman(m, t),
            ]
        )
    write_rows(args.out, header, rows)
    print(f"wrote {len(rows)} rows to {args.out}")


def cmd_eval(args):
    m = load_model(args.model)
    if args.points:
        z1, z2 = read_points(args.points)
    elif args.grid:
        try:
            g1, g2 = args.grid.split(",")
        except ValueError:
            raise InputError("--grid expects two grid specs separated by a comma") from None
        Z1, Z2 = np.meshgrid(parse_grid(g1), parse_grid(g2), indexing="ij")
        z1, z2 = Z1.ravel(), Z2.ravel()
    else:
        raise InputError("eval needs --points or --grid")
    pdf = joint_pdf(m, z1, z2)
    cdf = joint_cdf(m, z1, z2)
    write_rows(args.out, ["z1", "z2", "pdf", "cdf"], zip(z1, z2, pdf, cdf))
    print(f"wrote {len(z1)} points to {args.out}")


def cmd_validate(args):
    m = load_model(args.model)
    print(f"valid model: p0={m.p0}, p1={m.p1}, a1={m.a1:g}, a2={m.a2:g}")


def build_parser():
    parser = argparse.ArgumentParser(prog="csph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a dataset from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latent", action="store_true", help="also write tau12, k, resid1, resid2")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="maximum-likelihood fit of the reduced model")
    p.add_argument("--data", required=True)
    p.add_argument("--p0", type=int, default=3)
    p.add_argument("--p1", type=int, default=2)
    p.add_argument("--alpha", choices=["fixed", "estimated"], default="fixed")
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--log-transform", action="store_true", help="fit log(x) instead of x")
    p.add_argument("--lower", type=float, default=None, help="keep pairs with both coordinates above this")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("risk", help="moments, quantiles and common-shock risk curves")
    p.add_argument("--model", required=True)
    p.add_argument("--levels", default="0.95,0.975,0.99")
    p.add_argument("--a-grid", default=None, help="threshold grid; default 50 points up to the 0.99 shock quantile")
    p.add_argument("--vartheta-grid", default="0.05:1:20")
    p.add_argument("--curves-dir", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("dependence", help="conditional dependence curves given the shock time")
    p.add_argument("--model", required=True)
    p.add_argument("--t-grid", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dependence)

    p = sub.add_parser("eval", help="joint pdf and cdf at points")
    p.add_argument("--model", required=True)
    p.add_argument("--points", default=None, help="CSV of z1,z2 pairs")
    p.add_argument("--grid", default=None, help='two grid specs, e.g. "0:40:41,0:30:31"')
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "fit" and args.log_transform and args.lower is None:
        args.lower = 1.0
    try:
        args.func(args)
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for d in exc.diagnostics:
            print(f"  {json.dumps(d)}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValidationError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, DomainError, SingularMatrixError, CSPHError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
