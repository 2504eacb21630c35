"""Seeded replication of the case-study tables and figure data.

Every random stream is derived from ``(base_seed, *key)`` with
:func:`wbic.core.chain_seed`, and the key is stored on the record. Keys are

* tables: ``(k, r, 0)`` for the WBIC chain of model ``k``, replicate ``r``;
  ``(k, r, 1)`` for its power-posterior run (temperature ``j`` appends ``j``);
* synthetic figures: the dataset index (and grid index where relevant); the
  mixture study uses ``(d, 0)`` for data, ``(d, 1)`` for WBIC, ``(d, 2)`` for PP.

Adding replicates or datasets therefore never changes existing records.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ChainConfig, DomainError, chain_seed, power_schedule, wbic_temperature
from .data import Dataset, ingest_csv
from .estimators import (
    idealized_comparison_normal,
    optimal_temperature_search,
    pp_corrected,
    pp_standard,
    run_power_posterior,
    wbic_estimate,
)
from .logistic import (
    LogisticModel,
    LogisticModelSpec,
    pima_design,
    unit_information_prior_logistic,
)
from .mixture import MixtureModel, MixtureSpec, simulate_mixture
from .normal import (
    NormalModelSpec,
    evidence_gap_normal,
    expected_log_deviance_normal,
    log_evidence_normal,
    optimal_temperature_normal,
)
from .regression import (
    PINE_PRIOR,
    LinRegModel,
    LinRegModelSpec,
    centered_design,
    unit_information_prior_linreg,
)


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


TABLES = {
    # experiment: (dataset schema, prior mode)
    "table1": ("pine", "informative"),
    "table2": ("pine", "informative"),
    "table3": ("pine", "unit-information"),
    "table4": ("pima", "vague"),
    "table5": ("pima", "unit-information"),
}
FIGURES = ("fig1", "fig2a", "fig2b", "fig3", "fig4", "fig5")
EXPERIMENTS = tuple(TABLES) + FIGURES
PRIOR_MODES = ("informative", "unit-information", "vague")

DEFAULT_REPLICATES = {
    **{k: 20 for k in TABLES},
    "fig1": 1, "fig2a": 100, "fig2b": 100, "fig3": 100, "fig4": 1, "fig5": 50,
}
DEFAULT_CHAINS = {
    # (WBIC chain, per-temperature PP chain)
    "table": (ChainConfig(100_000, 10_000), ChainConfig(20_000, 2_000)),
    "fig5": (ChainConfig(5_000, 1_000), ChainConfig(2_000, 500)),
}

FIG1_N = (1, 100, 10_000)
FIG1_M = (0.0, 1.0)
FIG1_V = tuple(10.0**k for k in range(-2, 6))
FIG2A_N = (50, 100, 1000, 10_000)
FIG2B_V = (10.0, 100.0, 1000.0)
FIG4_N = tuple(range(3, 51)) + tuple(range(60, 100_001, 10))
MIXTURE_TRUTH = {"means": (-5.0, 0.0, 5.0), "variances": (1.0, 1.0, 1.0), "weights": (1 / 3, 1 / 3, 1 / 3)}

# Columns of the figure CSV, per experiment.
FIGURE_COLUMNS = {
    "fig1": ("n", "m", "v", "t_star", "wbic_variance", "pp_variance", "ratio"),
    "fig2a": ("dataset", "n", "t_star", "t_w"),
    "fig2b": ("dataset", "v", "wbic", "log_evidence", "difference"),
    "fig3": ("dataset", "m", "wbic", "log_evidence", "difference"),
    "fig4": ("n", "t_star", "t_w", "difference"),
    "fig5": ("dataset", "wbic", "wbic_se", "pp", "pp_se"),
}


def normalize_prior(mode):
    if mode is None:
        return None
    mode = mode.replace("_", "-")
    if mode not in PRIOR_MODES:
        raise ConfigError(f"unknown prior mode {mode!r}; expected one of {PRIOR_MODES}")
    return mode


@dataclass(frozen=True)
class ExperimentConfig:
    """What to run; ``None`` fields take the experiment's default.

    ``synthetic`` may set ``n`` (mixture sample size) and ``deviance``
    (``"observed"`` or ``"complete"``) for ``fig5``.
    """

    experiment: str
    base_seed: int = 0
    replicates: int | None = None
    chain: ChainConfig | None = None
    pp_chain: ChainConfig | None = None
    schedule_m: int = 40
    schedule_c: float = 5.0
    data_path: str | None = None
    prior: str | None = None
    model: str | None = None
    q0_form: str = "printed"
    pima_cov_form: str = "printed"
    synthetic: dict = field(default_factory=dict)
    record_wall_time: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if not (isinstance(self.base_seed, int) and self.base_seed >= 0):
            raise ConfigError("base_seed must be a non-negative integer")
        if self.replicates is not None and self.replicates < 1:
            raise ConfigError("replicate count must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        prior = normalize_prior(self.prior)
        object.__setattr__(self, "prior", prior)
        if self.experiment in TABLES:
            schema, fixed = TABLES[self.experiment]
            if prior is not None and prior != fixed:
                raise ConfigError(f"{self.experiment} uses the {fixed} prior, not {prior}")
            if self.data_path is None:
                raise ConfigError(f"{self.experiment} needs a {schema} dataset (--data)")
            if not os.path.isfile(self.data_path):
                raise ConfigError(f"dataset file {self.data_path} does not exist")
            if self.model is not None and self.model not in (f"{schema}-1", f"{schema}-2"):
                raise ConfigError(f"model must be {schema}-1 or {schema}-2")
        try:
            power_schedule(self.schedule_m, self.schedule_c)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def n_replicates(self) -> int:
        return self.replicates or DEFAULT_REPLICATES[self.experiment]

    def chains(self) -> tuple[ChainConfig, ChainConfig]:
        wbic, pp = DEFAULT_CHAINS["fig5" if self.experiment == "fig5" else "table"]
        return self.chain or wbic, self.pp_chain or pp


@dataclass(frozen=True)
class ResultRecord:
    """One estimate. ``seed`` is ``[base_seed, *key]`` for :func:`chain_seed`."""

    experiment: str
    replicate: int
    model: str
    method: str
    log_evidence: float | None
    std_error: float | None
    seed: tuple
    wall_time: float | None = None
    aux: dict = field(default_factory=dict)
    error: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "seed", tuple(int(s) for s in self.seed))
        for name in ("log_evidence", "std_error", "wall_time"):
            v = getattr(self, name)
            if v is not None:
                v = float(v)
                object.__setattr__(self, name, v if math.isfinite(v) else None)

    @property
    def ok(self) -> bool:
        return self.error is None and self.log_evidence is not None

    def to_json(self) -> str:
        d = asdict(self)
        d["seed"] = list(self.seed)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ResultRecord":
        return cls(**json.loads(line))


def emit(records) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def parse(text: str) -> list[ResultRecord]:
    return [ResultRecord.from_json(line) for line in text.splitlines() if line.strip()]


def read_records(path) -> list[ResultRecord]:
    with open(path) as fh:
        return parse(fh.read())


# --------------------------------------------------------------------------
# model construction


def load_dataset(path, schema) -> Dataset:
    return ingest_csv(path, schema)


def _check_schema(dataset, schema):
    if dataset.schema != schema:
        raise ConfigError(f"expected a {schema} dataset, got {dataset.schema}")


def pine_models(dataset: Dataset, prior: str = "informative", q0_form: str = "printed"):
    _check_schema(dataset, "pine")
    cols = dataset.columns
    X1, X2 = centered_design(cols["x"]), centered_design(cols["z"])
    y = cols["y"]
    if prior == "informative":
        hp = PINE_PRIOR
        mu0, Q0, a0, b0 = hp["mu0"], hp["Q0"], hp["a0"], hp["b0"]
    elif prior == "unit-information":
        mu0, Q0, a0, b0 = unit_information_prior_linreg(X1, X2, y, q0_form)
    else:
        raise ConfigError(f"pine models support informative and unit-information priors, not {prior}")
    return [LinRegModel(LinRegModelSpec(X, y, mu0, Q0, a0, b0), f"pine-{k}") for k, X in ((1, X1), (2, X2))]


def pima_models(dataset: Dataset, prior: str = "vague", cov_form: str = "printed", tau: float = 0.01):
    _check_schema(dataset, "pima")
    out = []
    for k in (1, 2):
        X, y = pima_design(dataset.columns, k)
        if prior == "vague":
            spec = LogisticModelSpec(X, y, tau=tau)
        elif prior == "unit-information":
            mean, cov = unit_information_prior_logistic(X, y, cov_form)
            spec = LogisticModelSpec(X, y, prior_mean=mean, prior_cov=cov)
        else:
            raise ConfigError(f"Pima models support vague and unit-information priors, not {prior}")
        out.append(LogisticModel(spec, f"pima-{k}"))
    return out


# --------------------------------------------------------------------------
# tasks: top-level functions so they can run in worker processes


@dataclass(frozen=True)
class _Task:
    kind: str
    replicate: int
    model: str
    method: str
    key: tuple
    payload: dict


def _timer(config):
    start = time.perf_counter()
    return lambda: (time.perf_counter() - start) if config.record_wall_time else None


def _task_exact(task, config):
    model = task.payload["model"]
    clock = _timer(config)
    L = model.log_evidence()
    t_star = optimal_temperature_search(model.expected_log_deviance, L)
    t_w = wbic_temperature(model.n)
    seed = (config.base_seed,) + task.key
    return [
        ResultRecord(config.experiment, 0, task.model, "exact", L, None, seed, clock()),
        ResultRecord(
            config.experiment, 0, task.model, "oracle_t", L, None, seed, clock(),
            {"t_star": t_star, "t_w": t_w, "wbic_analytic": model.expected_log_deviance(t_w)},
        ),
    ]


def _task_wbic(task, config):
    chain, _ = config.chains()
    clock = _timer(config)
    est = wbic_estimate(task.payload["model"], chain, chain_seed(config.base_seed, *task.key))
    aux = {k: est.diagnostics[k] for k in ("t_w", "acceptance_rate") if k in est.diagnostics}
    return [ResultRecord(
        config.experiment, task.replicate, task.model, "wbic", est.log_evidence, est.std_error,
        (config.base_seed,) + task.key, clock(), aux,
    )]


def _task_pp(task, config):
    _, pp_chain = config.chains()
    schedule = power_schedule(config.schedule_m, config.schedule_c)
    clock = _timer(config)
    run = run_power_posterior(task.payload["model"], schedule, pp_chain, chain_seed(config.base_seed, *task.key))
    seed = (config.base_seed,) + task.key
    wall = clock()
    out = []
    for est in (pp_standard(run), pp_corrected(run)):
        aux = {"m": schedule.m, "c": float(config.schedule_c)}
        out.append(ResultRecord(
            config.experiment, task.replicate, task.model, est.method, est.log_evidence,
            est.std_error, seed, wall, aux,
        ))
    return out


def _task_fig1(task, config):
    n = task.payload["n"]
    rng = np.random.default_rng(chain_seed(config.base_seed, *task.key))
    y = rng.standard_normal(n)
    out = []
    for m in FIG1_M:
        for v in FIG1_V:
            res = idealized_comparison_normal(NormalModelSpec(y, m, v))
            out.append(ResultRecord(
                config.experiment, task.replicate, f"normal:n={n}:m={m:g}:v={v:g}", "oracle_t",
                res.log_evidence, None, (config.base_seed,) + task.key, None,
                {"n": n, "m": m, "v": v, "t_star": res.t_star, "wbic_variance": res.wbic_variance,
                 "pp_variance": res.pp_variance, "ratio": res.ratio},
            ))
    return out


def _normal_pair(config, task, spec, label, extra):
    """exact and analytic-WBIC records for one normal dataset."""
    L = log_evidence_normal(spec)
    t_w = wbic_temperature(spec.n)
    wbic = expected_log_deviance_normal(spec, t_w)
    seed = (config.base_seed,) + task.key
    aux = {"t_w": t_w, **extra}
    return [
        ResultRecord(config.experiment, task.replicate, label, "exact", L, None, seed, None, dict(aux)),
        ResultRecord(config.experiment, task.replicate, label, "wbic", wbic, None, seed, None,
                     {**aux, "difference": wbic - L}),
    ]


def _task_fig2a(task, config):
    n = task.payload["n"]
    rng = np.random.default_rng(chain_seed(config.base_seed, *task.key))
    spec = NormalModelSpec(rng.standard_normal(n), 0.0, 10.0)
    L = log_evidence_normal(spec)
    return [ResultRecord(
        config.experiment, task.replicate, f"normal:n={n}:v=10", "oracle_t", L, None,
        (config.base_seed,) + task.key, None,
        {"n": n, "t_star": optimal_temperature_normal(spec), "t_w": wbic_temperature(n)},
    )]


def _task_fig2b(task, config):
    rng = np.random.default_rng(chain_seed(config.base_seed, *task.key))
    y = rng.standard_normal(50)
    out = []
    for v in FIG2B_V:
        out += _normal_pair(config, task, NormalModelSpec(y, 0.0, v), f"normal:n=50:v={v:g}", {"v": v})
    return out


def _task_fig3(task, config):
    rng = np.random.default_rng(chain_seed(config.base_seed, *task.key))
    y = rng.standard_normal(1000)
    out = []
    for m in (0.0, 1.0):
        out += _normal_pair(config, task, NormalModelSpec(y, m, 1.0), f"normal:n=1000:m={m:g}", {"m": m})
    return out


def _task_fig4(task, config):
    out = []
    for i, n in task.payload["grid"]:
        key = (i,)
        rng = np.random.default_rng(chain_seed(config.base_seed, *key))
        spec = NormalModelSpec.mean_corrected(rng.standard_normal(n), 1.0)
        t_w = wbic_temperature(n)
        out.append(ResultRecord(
            config.experiment, 0, f"normal:n={n}", "oracle_t", log_evidence_normal(spec), None,
            (config.base_seed,) + key, None,
            {"n": n, "t_star": optimal_temperature_normal(spec), "t_w": t_w,
             "difference": evidence_gap_normal(spec, t_w)},
        ))
    return out


def _task_fig5(task, config):
    d = task.replicate
    n = int(config.synthetic.get("n", 50))
    chain, pp_chain = config.chains()
    data = simulate_mixture(n, seed=chain_seed(config.base_seed, d, 0), **MIXTURE_TRUTH)
    deviance = config.synthetic.get("deviance", "observed")
    model = MixtureModel(MixtureSpec(), data, deviance=deviance)
    label = f"mixture:n={n}" + ("" if deviance == "observed" else f":{deviance}")
    clock = _timer(config)
    w = wbic_estimate(model, chain, chain_seed(config.base_seed, d, 1))
    wall = clock()
    schedule = power_schedule(config.schedule_m, config.schedule_c)
    clock = _timer(config)
    run = run_power_posterior(model, schedule, pp_chain, chain_seed(config.base_seed, d, 2))
    pp_wall = clock()
    out = [ResultRecord(config.experiment, d, label, "wbic", w.log_evidence, w.std_error,
                        (config.base_seed, d, 1), wall, {"t_w": w.diagnostics["t_w"]})]
    for est in (pp_standard(run), pp_corrected(run)):
        out.append(ResultRecord(config.experiment, d, label, est.method, est.log_evidence,
                                est.std_error, (config.base_seed, d, 2), pp_wall))
    return out


_RUNNERS = {
    "exact": _task_exact, "wbic": _task_wbic, "pp": _task_pp, "fig1": _task_fig1,
    "fig2a": _task_fig2a, "fig2b": _task_fig2b, "fig3": _task_fig3, "fig4": _task_fig4,
    "fig5": _task_fig5,
}


def _execute(args):
    task, config = args
    try:
        return _RUNNERS[task.kind](task, config)
    except Exception as exc:  # noqa: BLE001 - recorded, the batch continues
        return [ResultRecord(
            config.experiment, task.replicate, task.model, task.method, None, None,
            (config.base_seed,) + task.key, None, {}, f"{type(exc).__name__}: {exc}",
        )]


def _tasks(config: ExperimentConfig) -> list[_Task]:
    exp, R = config.experiment, config.n_replicates
    if exp in TABLES:
        schema, prior = TABLES[exp]
        dataset = load_dataset(config.data_path, schema)
        if schema == "pine":
            models = pine_models(dataset, prior, config.q0_form)
        else:
            models = pima_models(dataset, prior, config.pima_cov_form)
        tasks = []
        for k, model in enumerate(models):
            if config.model is not None and model.name != config.model:
                continue
            if hasattr(model, "log_evidence"):
                tasks.append(_Task("exact", 0, model.name, "exact", (k,), {"model": model}))
            for r in range(R):
                tasks.append(_Task("wbic", r, model.name, "wbic", (k, r, 0), {"model": model}))
                tasks.append(_Task("pp", r, model.name, "pp", (k, r, 1), {"model": model}))
        return tasks
    if exp == "fig1":
        return [_Task("fig1", 0, f"normal:n={n}", "oracle_t", (i,), {"n": n}) for i, n in enumerate(FIG1_N)]
    if exp == "fig2a":
        return [
            _Task("fig2a", d, f"normal:n={n}:v=10", "oracle_t", (i, d), {"n": n})
            for i, n in enumerate(FIG2A_N) for d in range(R)
        ]
    if exp in ("fig2b", "fig3"):
        return [_Task(exp, d, "normal", "wbic", (d,), {}) for d in range(R)]
    if exp == "fig4":
        grid = list(enumerate(FIG4_N))
        chunk = 500
        return [
            _Task("fig4", 0, "normal", "oracle_t", (j,), {"grid": grid[j:j + chunk]})
            for j in range(0, len(grid), chunk)
        ]
    return [_Task("fig5", d, "mixture", "wbic", (d,), {}) for d in range(R)]


def run_experiment(config: ExperimentConfig, out=None) -> list[ResultRecord]:
    """Run every task of ``config``; failed tasks become error records.

    ``out`` is an optional writable text stream; each task's records are
    written (and flushed) as soon as the task finishes, in task order.
    """
    tasks = _tasks(config)
    jobs = [(t, config) for t in tasks]
    records = []

    def sink(batch):
        records.extend(batch)
        if out is not None:
            out.write(emit(batch))
            out.flush()

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for batch in pool.map(_execute, jobs):
                sink(batch)
    else:
        for job in jobs:
            sink(_execute(job))
    return records


def failures(records) -> list[ResultRecord]:
    return [r for r in records if r.error is not None]


# --------------------------------------------------------------------------
# summaries

BAYES_FACTORS = {
    # family: (name, numerator model, denominator model)
    "pine": ("bf21", "pine-2", "pine-1"),
    "pima": ("bf12", "pima-1", "pima-2"),
}


def _mean_se(values):
    """Mean and standard error of the mean; exact sums make both order-free."""
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, None
    ss = math.fsum((v - mean) ** 2 for v in values)
    return mean, math.sqrt(ss / (n - 1) / n)


def summarize(records) -> list[dict]:
    """Per (experiment, model, method) mean and SE, Bayes factors, and paired comparisons.

    Bayes-factor SEs use the delta method on the log scale,
    se(BF) = BF * sqrt(se_1**2 + se_2**2); they are absent when either side
    has no SE (e.g. exact values).
    """
    records = list(records)
    if not records:
        raise ValueError("no records to summarize")
    groups = defaultdict(list)
    for r in records:
        if r.ok:
            groups[(r.experiment, r.model, r.method)].append(r.log_evidence)

    rows = []
    stats = {}
    for key in sorted(groups):
        mean, se = _mean_se(sorted(groups[key]))
        stats[key] = (mean, se, len(groups[key]))
        exp, model, method = key
        rows.append({"experiment": exp, "model": model, "method": method, "quantity": "log_evidence",
                     "count": len(groups[key]), "mean": mean, "se": se})

    methods = sorted({k[2] for k in stats})
    for exp in sorted({k[0] for k in stats}):
        for name, num, den in BAYES_FACTORS.values():
            for method in methods:
                a, b = stats.get((exp, num, method)), stats.get((exp, den, method))
                if a is None or b is None:
                    continue
                bf = math.exp(a[0] - b[0])
                se = None if a[1] is None or b[1] is None else bf * math.hypot(a[1], b[1])
                rows.append({"experiment": exp, "model": f"{num}/{den}", "method": method, "quantity": name,
                             "count": min(a[2], b[2]), "mean": bf, "se": se})

    # paired |error| comparison of the two quadrature rules against the exact value
    by_rep = defaultdict(dict)
    exact = {}
    for r in records:
        if not r.ok:
            continue
        if r.method == "exact":
            exact[(r.experiment, r.model)] = r.log_evidence
        elif r.method in ("pp_standard", "pp_corrected"):
            by_rep[(r.experiment, r.model, r.replicate)][r.method] = r.log_evidence
    wins = defaultdict(lambda: [0, 0])
    for (exp, model, _), pair in by_rep.items():
        truth = exact.get((exp, model))
        if truth is None or len(pair) != 2:
            continue
        w = wins[(exp, model)]
        w[0] += abs(pair["pp_corrected"] - truth) < abs(pair["pp_standard"] - truth)
        w[1] += 1
    for (exp, model) in sorted(wins):
        k, n = wins[(exp, model)]
        rows.append({"experiment": exp, "model": model, "method": "pp_corrected",
                     "quantity": "corrected_beats_standard", "count": n, "mean": k / n, "se": None})
    return rows


SUMMARY_COLUMNS = ("experiment", "model", "method", "quantity", "count", "mean", "se")


def summary_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if row[k] is None else (repr(row[k]) if isinstance(row[k], float) else row[k]))
                    for k in SUMMARY_COLUMNS})
    return buf.getvalue()


def figure_rows(records, experiment: str) -> list[dict]:
    """Flatten figure records into rows with the columns in FIGURE_COLUMNS."""
    if experiment not in FIGURE_COLUMNS:
        raise ConfigError(f"{experiment} has no figure data")
    recs = [r for r in records if r.ok and r.experiment == experiment]
    rows = []
    if experiment in ("fig1", "fig4"):
        for r in recs:
            rows.append({c: r.aux[c] for c in FIGURE_COLUMNS[experiment]})
    elif experiment == "fig2a":
        for r in recs:
            rows.append({"dataset": r.replicate, "n": r.aux["n"], "t_star": r.aux["t_star"], "t_w": r.aux["t_w"]})
    elif experiment in ("fig2b", "fig3"):
        param = "v" if experiment == "fig2b" else "m"
        exact = {(r.replicate, r.model): r.log_evidence for r in recs if r.method == "exact"}
        for r in recs:
            if r.method != "wbic":
                continue
            L = exact[(r.replicate, r.model)]
            rows.append({"dataset": r.replicate, param: r.aux[param], "wbic": r.log_evidence,
                         "log_evidence": L, "difference": r.log_evidence - L})
    else:
        est = defaultdict(dict)
        for r in recs:
            est[r.replicate][r.method] = r
        for d in sorted(est):
            e = est[d]
            if "wbic" in e and "pp_corrected" in e:
                rows.append({"dataset": d, "wbic": e["wbic"].log_evidence, "wbic_se": e["wbic"].std_error,
                             "pp": e["pp_corrected"].log_evidence, "pp_se": e["pp_corrected"].std_error})
    return rows


def figure_csv(records, experiment: str) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=FIGURE_COLUMNS[experiment], lineterminator="\n")
    w.writeheader()
    for row in figure_rows(records, experiment):
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
