"""Command-line interface.

Exit codes: 0 success, 1 partial failure (some replicate or chain failed),
2 configuration error.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .core import ChainConfig, DomainError, chain_seed, power_schedule, wbic_temperature
from .data import DataError, ingest_csv
from .estimators import (
    idealized_comparison_normal,
    optimal_temperature_from_run,
    optimal_temperature_search,
    pp_corrected,
    pp_standard,
    run_power_posterior,
    wbic_estimate,
)
from .harness import (
    EXPERIMENTS,
    FIGURE_COLUMNS,
    MIXTURE_TRUTH,
    ConfigError,
    ExperimentConfig,
    ResultRecord,
    failures,
    figure_csv,
    normalize_prior,
    pima_models,
    pine_models,
    read_records,
    run_experiment,
    summarize,
    summary_csv,
)
from .mixture import MixtureModel, MixtureSpec, simulate_mixture
from .normal import (
    NormalModel,
    NormalModelSpec,
    expected_log_deviance_normal,
    log_evidence_normal,
    optimal_temperature_normal,
)

MODELS = ("normal", "pine-1", "pine-2", "pima-1", "pima-2", "mixture")

# (WBIC chain, per-temperature PP chain) when --chain-n / --burn-in are absent
_CHAIN_DEFAULTS = {
    "normal": ((20_000, 2_000), (20_000, 2_000)),
    "mixture": ((5_000, 1_000), (2_000, 500)),
    "regression": ((100_000, 10_000), (20_000, 2_000)),
}

# seed keys of the single-run commands
_KEY_WBIC, _KEY_PP, _KEY_DATA = 0, 1, 2


def _chain(args, which):
    family = args.model if args.model in ("normal", "mixture") else "regression"
    n_iter, burn = _CHAIN_DEFAULTS[family][which]
    if which == 0:
        n_iter = args.chain_n or n_iter
        burn = args.burn_in if args.burn_in is not None else burn
    else:
        n_iter = args.pp_chain_n or args.chain_n or n_iter
        burn = args.pp_burn_in if args.pp_burn_in is not None else (
            args.burn_in if args.burn_in is not None else burn)
    return ChainConfig(n_iter, burn)


def _build_model(args):
    """Model, plus its exact log evidence and analytic E(t) when available."""
    prior = normalize_prior(args.prior)
    name = args.model
    if name == "normal":
        if args.data:
            y = ingest_csv(args.data, "mixture").columns["y"]
        else:
            y = np.random.default_rng(chain_seed(args.seed, _KEY_DATA)).standard_normal(args.n)
        if prior in (None, "informative"):
            spec = NormalModelSpec(y, args.prior_mean, args.prior_var)
        elif prior == "unit-information":
            spec = NormalModelSpec.mean_corrected(y, 1.0)
        else:
            raise ConfigError("the normal model takes its prior from --prior-mean/--prior-var")
        return NormalModel(spec), log_evidence_normal(spec), lambda t: expected_log_deviance_normal(spec, t)
    if name == "mixture":
        if prior not in (None, "informative"):
            raise ConfigError("the mixture model only has the informative prior")
        if args.data:
            y = ingest_csv(args.data, "mixture").columns["y"]
        else:
            y = simulate_mixture(args.n, seed=chain_seed(args.seed, _KEY_DATA), **MIXTURE_TRUTH)
        return MixtureModel(MixtureSpec(), y), None, None
    if not args.data:
        raise ConfigError(f"{name} needs --data")
    family, k = name.split("-")
    dataset = ingest_csv(args.data, family)
    if family == "pine":
        model = pine_models(dataset, prior or "informative", args.q0_form)[int(k) - 1]
        return model, model.log_evidence(), model.expected_log_deviance
    model = pima_models(dataset, prior or "vague", args.pima_cov_form)[int(k) - 1]
    return model, None, None


def _write(args, text):
    if args.out:
        with open(args.out, "a") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _record(args, experiment, method, est, key, aux=None):
    return ResultRecord(
        experiment, 0, args.model, method, est.log_evidence, est.std_error,
        (args.seed, key), None, aux or {},
    )


def cmd_schedule(args):
    for t in power_schedule(args.schedule_m, args.schedule_c):
        print(repr(float(t)))
    return 0


def cmd_wbic(args):
    model, _, _ = _build_model(args)
    est = wbic_estimate(model, _chain(args, 0), chain_seed(args.seed, _KEY_WBIC))
    aux = {k: v for k, v in est.diagnostics.items() if isinstance(v, (int, float))}
    _write(args, _record(args, "wbic", "wbic", est, _KEY_WBIC, aux).to_json() + "\n")
    return 0


def cmd_pp(args):
    model, _, _ = _build_model(args)
    schedule = power_schedule(args.schedule_m, args.schedule_c)
    run = run_power_posterior(model, schedule, _chain(args, 1), chain_seed(args.seed, _KEY_PP))
    est = pp_standard(run) if args.rule == "standard" else pp_corrected(run)
    aux = {"m": schedule.m, "c": args.schedule_c}
    _write(args, _record(args, "pp", est.method, est, _KEY_PP, aux).to_json() + "\n")
    return 0


def cmd_oracle_t(args):
    model, exact, expectation = _build_model(args)
    t_w = wbic_temperature(model.n) if model.n >= 3 else None
    if expectation is not None:
        if args.model == "normal":
            t_star = optimal_temperature_normal(model.spec)
        else:
            t_star = optimal_temperature_search(expectation, exact)
        aux = {"t_star": t_star, "t_w": t_w, "source": "analytic"}
        rec = ResultRecord("oracle-t", 0, args.model, "oracle_t", exact, None, (args.seed,), None, aux)
    else:
        # no closed form: Monte Carlo E(t) on the schedule, reference value from the corrected rule
        schedule = power_schedule(args.schedule_m, args.schedule_c)
        run = run_power_posterior(model, schedule, _chain(args, 1), chain_seed(args.seed, _KEY_PP))
        ref = pp_corrected(run)
        t_star, width = optimal_temperature_from_run(run, ref.log_evidence)
        aux = {"t_star": t_star, "t_w": t_w, "grid_width": width, "source": "monte_carlo"}
        rec = ResultRecord("oracle-t", 0, args.model, "oracle_t", ref.log_evidence, ref.std_error,
                           (args.seed, _KEY_PP), None, aux)
    _write(args, rec.to_json() + "\n")
    return 0


def cmd_idealized(args):
    y = np.random.default_rng(chain_seed(args.seed, _KEY_DATA)).standard_normal(args.n)
    res = idealized_comparison_normal(NormalModelSpec(y, args.prior_mean, args.prior_var), args.grid_size)
    aux = {"n": args.n, "m": args.prior_mean, "v": args.prior_var, "t_star": res.t_star,
           "wbic_variance": res.wbic_variance, "pp_variance": res.pp_variance, "ratio": res.ratio}
    rec = ResultRecord("idealized", 0, "normal", "oracle_t", res.log_evidence, None, (args.seed, _KEY_DATA), None, aux)
    _write(args, rec.to_json() + "\n")
    return 0


def _stem(path):
    root, ext = os.path.splitext(path)
    return root if ext == ".jsonl" else path


def cmd_replicate(args):
    chain = pp_chain = None
    config = ExperimentConfig(
        args.experiment,
        base_seed=args.seed,
        replicates=args.replicates,
        schedule_m=args.schedule_m,
        schedule_c=args.schedule_c,
        data_path=args.data,
        prior=args.prior,
        model=args.model,
        q0_form=args.q0_form,
        pima_cov_form=args.pima_cov_form,
        synthetic={k: v for k, v in (("n", args.n), ("deviance", args.mixture_deviance)) if v is not None},
        record_wall_time=args.timing,
        workers=args.workers,
    )
    wbic_default, pp_default = config.chains()
    if args.chain_n or args.burn_in is not None:
        chain = ChainConfig(args.chain_n or wbic_default.n_iter,
                            args.burn_in if args.burn_in is not None else wbic_default.burn_in)
    if args.pp_chain_n or args.pp_burn_in is not None:
        pp_chain = ChainConfig(args.pp_chain_n or pp_default.n_iter,
                               args.pp_burn_in if args.pp_burn_in is not None else pp_default.burn_in)
    if chain or pp_chain:
        config = replace(config, chain=chain, pp_chain=pp_chain)

    out = args.out or f"{args.experiment}.jsonl"
    stem = _stem(out)
    with open(out, "w") as fh:
        records = run_experiment(config, fh)
    with open(stem + ".summary.csv", "w") as fh:
        fh.write(summary_csv(summarize(records)))
    if args.experiment in FIGURE_COLUMNS:
        with open(stem + ".figure.csv", "w") as fh:
            fh.write(figure_csv(records, args.experiment))
    bad = failures(records)
    for r in bad:
        print(f"failed: replicate {r.replicate} {r.model} {r.method}: {r.error}", file=sys.stderr)
    return 1 if bad else 0


def cmd_summarize(args):
    records = []
    for path in args.files:
        records += read_records(path)
    text = summary_csv(summarize(records))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 1 if failures(records) else 0


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wbic", description="WBIC and power-posterior evidence estimation.")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=0)
    common.add_argument("--out", help="output file (appended for single runs)")
    common.add_argument("--schedule-m", type=_positive_int, default=40)
    common.add_argument("--schedule-c", type=float, default=5.0)

    chains = argparse.ArgumentParser(add_help=False)
    chains.add_argument("--chain-n", type=_positive_int, help="WBIC chain length (and PP, unless --pp-chain-n)")
    chains.add_argument("--burn-in", type=_nonneg_int)
    chains.add_argument("--pp-chain-n", type=_positive_int, help="power-posterior chain length per temperature")
    chains.add_argument("--pp-burn-in", type=_nonneg_int)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", choices=MODELS, default="normal")
    model.add_argument("--prior", choices=("informative", "unit-information", "vague"))
    model.add_argument("--data", help="CSV dataset")
    model.add_argument("--n", type=_positive_int, default=50, help="size of simulated data")
    model.add_argument("--prior-mean", type=float, default=0.0, help="normal model prior mean")
    model.add_argument("--prior-var", type=float, default=10.0, help="normal model prior variance")
    model.add_argument("--q0-form", choices=("printed", "summed"), default="printed")
    model.add_argument("--pima-cov-form", choices=("printed", "unit_information"), default="printed")

    s = sub.add_parser("schedule", parents=[common], help="print the power-law temperature schedule")
    s.set_defaults(func=cmd_schedule)

    s = sub.add_parser("wbic", parents=[common, chains, model], help="WBIC estimate")
    s.set_defaults(func=cmd_wbic)

    s = sub.add_parser("pp", parents=[common, chains, model], help="power-posterior estimate")
    s.add_argument("rule", choices=("standard", "corrected"))
    s.set_defaults(func=cmd_pp)

    s = sub.add_parser("oracle-t", parents=[common, chains, model], help="optimal temperature")
    s.set_defaults(func=cmd_oracle_t)

    s = sub.add_parser("idealized", parents=[common], help="idealised WBIC vs PP variance (normal model)")
    s.add_argument("--n", type=_positive_int, default=100)
    s.add_argument("--prior-mean", type=float, default=0.0)
    s.add_argument("--prior-var", type=float, default=1.0)
    s.add_argument("--grid-size", type=int, default=2000)
    s.set_defaults(func=cmd_idealized)

    s = sub.add_parser("replicate", parents=[common, chains], help="replicate a table or figure")
    s.add_argument("experiment", choices=EXPERIMENTS)
    s.add_argument("--data")
    s.add_argument("--prior", choices=("informative", "unit-information", "vague"))
    s.add_argument("--model")
    s.add_argument("--replicates", type=_positive_int)
    s.add_argument("--n", type=_positive_int, help="mixture sample size (fig5)")
    s.add_argument("--mixture-deviance", choices=("observed", "complete"), help="quantity recorded by fig5 chains")
    s.add_argument("--q0-form", choices=("printed", "summed"), default="printed")
    s.add_argument("--pima-cov-form", choices=("printed", "unit_information"), default="printed")
    s.add_argument("--timing", action="store_true", help="record wall time (output no longer byte-identical)")
    s.add_argument("--workers", type=_positive_int, default=1)
    s.set_defaults(func=cmd_replicate)

    s = sub.add_parser("summarize", help="summarize JSON-lines result files")
    s.add_argument("files", nargs="+")
    s.add_argument("--out")
    s.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - a run failed after configuration succeeded
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
