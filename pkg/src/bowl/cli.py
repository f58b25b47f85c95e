"""Command-line front end: fit, predict, reproduce, verify.

Exit codes: 0 ok, 1 verification failure, 2 input error, 3 numerical
failure. Artifact files are written to a temp file and renamed into
place, so a failing run never leaves partial output; every artifact
embeds the configuration and seed that produced it in a leading
`# config=` comment line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import verify as verify_checks
from .diagnostics import effective_sample_size, split_rhat
from .gibbs import GibbsConfig, GibbsNumericalError, PosteriorDraws, run_chain
from .prediction import GridSpec, certainty_grid, coefficient_magnitudes, recommend
from .pseudo_model import (
    DataError,
    Dataset,
    ExponentialPowerPrior,
    NormalPrior,
    SpikeSlabPrior,
    add_intercept,
    load_dataset_csv,
)
from .simulate import METHODS, ScenarioSpec, run_experiment, uncertainty_study

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL = 3


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(config: dict, header: list[str], rows) -> str:
    lines = ["# config=" + json.dumps(config, sort_keys=True)]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _read_config_comment(path: Path) -> dict:
    with open(path) as fh:
        first = fh.readline().strip()
    if not first.startswith("# config="):
        raise DataError(f"{path}: missing '# config=' metadata line")
    return json.loads(first[len("# config=") :])


def _parse_draws_csv(path: Path) -> PosteriorDraws:
    config = _read_config_comment(path)
    with open(path) as fh:
        fh.readline()
        header = fh.readline().strip().split(",")
        body = [line for line in fh.read().splitlines() if line.strip()]
    if not body:
        raise DataError(f"{path}: no retained draws")
    rows = np.array([[float(v) for v in line.split(",")] for line in body])
    beta_cols = [i for i, name in enumerate(header) if name.startswith("beta_")]
    if not beta_cols:
        raise DataError(f"{path}: no beta_* columns found")
    beta = rows[:, beta_cols]
    n_chains = int(config.get("n_chains", 1))
    kept = beta.shape[0] // n_chains
    gibbs_config = GibbsConfig(
        n_draws=int(config.get("n_draws", kept)),
        burn_in=int(config.get("burn_in", 0)),
        n_chains=n_chains,
        seed=int(config.get("seed", 0)),
    )
    return PosteriorDraws(
        beta=beta.reshape(n_chains, kept, beta.shape[1]),
        config=gibbs_config,
        chain_seeds=[(gibbs_config.seed, c) for c in range(n_chains)],
        meta={"intercept": bool(config.get("intercept", False))},
    )


def _prior_from_args(args) -> NormalPrior | ExponentialPowerPrior | SpikeSlabPrior:
    if args.prior == "normal":
        return NormalPrior(mu0=args.mu0, sigma0_sq=args.sigma0_sq)
    if args.prior == "ep":
        return ExponentialPowerPrior(nu=args.nu)
    return SpikeSlabPrior(nu=args.nu, pi_incl=args.pi)


def cmd_fit(args) -> int:
    out_dir = Path(args.out_dir)
    data, shift = load_dataset_csv(args.data, rho=args.rho)
    features = add_intercept(data.features) if args.intercept else data.features
    design = Dataset(features, data.actions, data.rewards, data.rho)
    config = GibbsConfig(
        n_draws=args.draws, burn_in=args.burn_in, n_chains=args.chains, seed=args.seed
    )
    feature_names = [f"x{j}" for j in range(1, data.p + 1)]
    coef_names = (["intercept"] if args.intercept else []) + feature_names
    meta = {"intercept": args.intercept}
    draws = run_chain(design, _prior_from_args(args), config, jobs=args.jobs, meta=meta)

    echo = {
        "command": "fit",
        "prior": args.prior,
        "mu0": args.mu0,
        "sigma0_sq": args.sigma0_sq,
        "nu": args.nu,
        "pi": args.pi,
        "rho": args.rho,
        "n_draws": args.draws,
        "burn_in": args.burn_in,
        "n_chains": args.chains,
        "seed": args.seed,
        "intercept": args.intercept,
        "reward_shift": shift.shift,
        "columns": feature_names,
    }

    header = ["chain", "draw"] + [f"beta_{name}" for name in coef_names]
    if draws.gamma is not None:
        header += [f"gamma_{name}" for name in coef_names]
    rows = []
    kept = config.n_draws - config.burn_in
    for c in range(config.n_chains):
        for k in range(kept):
            row = [c, config.burn_in + k] + list(draws.beta[c, k])
            if draws.gamma is not None:
                row += [int(v) for v in draws.gamma[c, k]]
            rows.append(row)
    _atomic_write(out_dir / "draws.csv", _csv_text(echo, header, rows))

    stacked = draws.stacked_beta
    ess = {
        name: effective_sample_size(draws.beta[:, :, j])
        for j, name in enumerate(coef_names)
    }
    rhat = (
        {name: split_rhat(draws.beta[:, :, j]) for j, name in enumerate(coef_names)}
        if config.n_chains >= 2
        else None
    )
    mags = coefficient_magnitudes(draws)
    summary = {
        "config": echo,
        "seed": args.seed,
        "retained_per_chain": kept,
        "n_chains": config.n_chains,
        "reward_shift": shift.shift,
        "posterior_mean": {name: float(v) for name, v in zip(coef_names, stacked.mean(axis=0))},
        "coefficient_magnitudes": {name: float(v) for name, v in zip(feature_names, mags)},
        "ess": ess,
        "split_rhat": rhat,
    }
    if draws.gamma is not None:
        summary["gamma_inclusion"] = {
            name: float(v)
            for name, v in zip(coef_names, draws.stacked_gamma.mean(axis=0))
        }
    _atomic_write(out_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out_dir / 'draws.csv'} and {out_dir / 'summary.json'}")
    return EXIT_OK


def _load_query_csv(path: Path, p_expected: int) -> np.ndarray:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise DataError(f"{path}: empty query file")
    header = lines[0].split(",")
    expected = [f"x{j}" for j in range(1, p_expected + 1)]
    if [c.strip() for c in header] != expected:
        raise DataError(f"{path}: query columns must be exactly {','.join(expected)}")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=float)
    if rows.ndim != 2 or rows.shape[1] != p_expected:
        raise DataError(f"{path}: expected {p_expected} feature columns")
    if not np.all(np.isfinite(rows)):
        raise DataError(f"{path}: NaN or Inf in query features")
    return rows


def cmd_predict(args) -> int:
    out_dir = Path(args.out_dir)
    draws = _parse_draws_csv(Path(args.draws))
    config = _read_config_comment(Path(args.draws))
    n_raw = draws.beta.shape[-1] - int(draws.meta.get("intercept", False))
    echo = {"command": "predict", "draws": str(args.draws), "source_config": config}

    if args.grid:
        spec = GridSpec(dims=(args.grid_dims[0] - 1, args.grid_dims[1] - 1), resolution=args.grid_res)
        coords, _, recs = certainty_grid(draws, spec)
        echo["grid_dims"] = list(args.grid_dims)
        echo["grid_res"] = args.grid_res
        rows = [
            [c[0], c[1], r.prob_plus, r.action, r.certainty]
            for c, r in zip(coords, recs)
        ]
        out = out_dir / "certainty_grid.csv"
        _atomic_write(out, _csv_text(echo, ["x_j1", "x_j2", "prob_plus", "action", "certainty"], rows))
    else:
        if not args.query:
            raise DataError("predict needs either --query CSV or --grid")
        queries = _load_query_csv(Path(args.query), n_raw)
        rows = []
        for x in queries:
            rec = recommend(draws, x)
            rows.append(list(x) + [rec.prob_plus, rec.action, rec.certainty])
        header = [f"x{j}" for j in range(1, n_raw + 1)] + ["prob_plus", "action", "certainty"]
        out = out_dir / "recommendations.csv"
        _atomic_write(out, _csv_text(echo, header, rows))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out_dir = Path(args.out_dir)
    if args.reps < 1:
        raise DataError("--reps must be at least 1")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise DataError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")

    echo = {
        "command": "reproduce",
        "scenario": args.scenario,
        "n": args.n,
        "reps": args.reps,
        "methods": methods,
        "seed": args.seed,
        "heatmap_n": args.heatmap_n,
        "grid_res": args.grid_res,
    }

    table_rows = []
    raw_rows = []
    for n_train in args.n:
        spec = ScenarioSpec(
            scenario_id=args.scenario, n_train=n_train, n_reps=args.reps, seed=args.seed
        )
        result = run_experiment(spec, methods, jobs=args.jobs)
        for cell in result.cells:
            table_rows.append(
                [cell.method, args.scenario, n_train, cell.mean_rate, cell.mc_se, cell.n_reps_ok]
            )
            for rep, rate in enumerate(cell.rates):
                raw_rows.append([cell.method, args.scenario, n_train, rep, rate])
    _atomic_write(
        out_dir / "tables.csv",
        _csv_text(echo, ["method", "scenario", "n_train", "mean_rate", "mc_se", "n_reps_ok"], table_rows),
    )
    _atomic_write(
        out_dir / "raw_rates.csv",
        _csv_text(echo, ["method", "scenario", "n_train", "rep", "rate"], raw_rows),
    )

    _, coords, _, recs, mags = uncertainty_study(
        scenario_id=args.scenario,
        n_train=args.heatmap_n,
        seed=args.seed,
        resolution=args.grid_res,
    )
    grid_rows = [
        [c[0], c[1], r.prob_plus, r.action, r.certainty] for c, r in zip(coords, recs)
    ]
    _atomic_write(
        out_dir / "heatmap.csv",
        _csv_text(echo, ["x_j1", "x_j2", "prob_plus", "action", "certainty"], grid_rows),
    )
    _atomic_write(
        out_dir / "coefficient_magnitudes.csv",
        _csv_text(echo, ["feature", "magnitude"], [[f"x{j + 1}", m] for j, m in enumerate(mags)]),
    )
    print(f"wrote tables.csv, raw_rates.csv, heatmap.csv, coefficient_magnitudes.csv in {out_dir}")
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = verify_checks.run_all(tol=args.tol, quick=args.quick, seed=args.seed)
    any_failed = False
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"[{status}] {check.name}: {check.detail}")
        any_failed = any_failed or not check.passed
    return EXIT_VERIFY_FAIL if any_failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bowl",
        description="Bayesian outcome-weighted learning for individualized treatment rules",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_shared(p):
        p.add_argument("--seed", type=int, default=0, help="64-bit master seed")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="parallelism for chains and replications")
        p.add_argument("--out-dir", default=".", help="directory for output artifacts")

    p_fit = sub.add_parser("fit", help="fit a Bayesian ITR on a CSV dataset")
    add_shared(p_fit)
    p_fit.add_argument("--data", required=True, help="CSV with columns x1..xp,a,r")
    p_fit.add_argument("--prior", choices=("normal", "ep", "ss"), default="normal")
    p_fit.add_argument("--mu0", type=float, default=0.0)
    p_fit.add_argument("--sigma0-sq", dest="sigma0_sq", type=float, default=1.0)
    p_fit.add_argument("--nu", type=float, default=0.8)
    p_fit.add_argument("--pi", type=float, default=0.5)
    p_fit.add_argument("--rho", type=float, default=0.5)
    p_fit.add_argument("--draws", type=int, default=500)
    p_fit.add_argument("--burn-in", dest="burn_in", type=int, default=150)
    p_fit.add_argument("--chains", type=int, default=1)
    p_fit.add_argument("--intercept", action=argparse.BooleanOptionalAction, default=True)
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="recommend treatments from saved draws")
    add_shared(p_pred)
    p_pred.add_argument("--draws", required=True, help="draws.csv from a fit")
    p_pred.add_argument("--query", help="CSV of feature rows x1..xp")
    p_pred.add_argument("--grid", action="store_true", help="evaluate a certainty lattice instead")
    p_pred.add_argument("--grid-dims", type=int, nargs=2, default=(1, 2), metavar=("J1", "J2"),
                        help="1-based feature indices spanning the lattice")
    p_pred.add_argument("--grid-res", type=int, default=33)
    p_pred.set_defaults(func=cmd_predict)

    p_rep = sub.add_parser("reproduce", help="rerun the simulation study")
    add_shared(p_rep)
    p_rep.add_argument("--scenario", type=int, choices=(1, 2), required=True)
    p_rep.add_argument("--n", type=int, nargs="+", default=[100, 200, 400, 800],
                       help="training sizes")
    p_rep.add_argument("--reps", type=int, default=200)
    p_rep.add_argument("--methods", default="owl,bowl-normal,bowl-ep,bowl-ss")
    p_rep.add_argument("--heatmap-n", dest="heatmap_n", type=int, default=1000)
    p_rep.add_argument("--grid-res", dest="grid_res", type=int, default=33)
    p_rep.set_defaults(func=cmd_reproduce)

    p_ver = sub.add_parser("verify", help="run the numerical identity checks")
    add_shared(p_ver)
    p_ver.add_argument("--tol", type=float, default=1e-6,
                       help="tolerance for the scale-mixture identity check")
    p_ver.add_argument("--quick", action="store_true", help="skip the long-chain check")
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except GibbsNumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
