"""Experiment configs, single runs, sweeps and CSV output.

Configs are flat ``key = value`` files; ``#`` starts a comment. Keys:

================  ========================================================
algorithm         motef | motef_vr | beer | choco | dsgd | d2  (required)
problem           synthetic | logreg  (required)
d, zeta, sigma    synthetic only; d required, zeta and sigma default 0
data_path         logreg training file in LibSVM format (required)
test_path         logreg held-out file; enables the test_acc column
reg_lambda        logreg penalty weight (default 0.05)
shuffle           logreg: shuffle rows before sharding (default false)
topology          complete | ring | star | grid | erdos_renyi | random_regular
n                 number of clients (required)
p, degree         erdos_renyi edge probability, random_regular degree
rows, cols        grid shape when n is not a perfect square
weights           metropolis (default) | lazy
compressor        topk:K | randk:K | gsgd:B | identity  (required)
gamma             gossip stepsize in (0, 1]  (required)
eta               model stepsize > 0  (required)
lambda_momentum   momentum in (0, 1] (default 1)
batch             per-round batch (default 1)
init_batch        batch of the initial gradient (default 1)
iters             number of rounds (required)
eval_every        metric period (default 1)
seed              run seed (default 0)
x0                initial model, every coordinate set to this value (default 0)
output            CSV path (default results/run.csv)
================  ========================================================

Relative paths are resolved against the config file's directory. When the
environment variable ``MOTEF_OUTPUT_DIR`` is set, CSV files go there and keep
their base names.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .algorithms import STEPS, HyperParams, MetricsRecord, run
from .compressors import parse_compressor
from .errors import ConfigError, SpecError, ValidationError
from .problems import accuracy, load_libsvm, logreg_oracles, shard, synth_new
from .topology import KINDS, build_topology

__all__ = [
    "ExperimentConfig",
    "RunResult",
    "SweepResult",
    "CSV_HEADER",
    "OUTPUT_ENV",
    "SWEEPABLE",
    "load_config",
    "parse_config",
    "build_components",
    "run_experiment",
    "write_csv",
    "sweep",
    "steady_state_error",
    "iterations_to_target",
    "tune",
]

CSV_HEADER = ("t", "bits_cum", "grad_norm_sq", "consensus", "loss", "subopt", "test_acc")
OUTPUT_ENV = "MOTEF_OUTPUT_DIR"
SWEEPABLE = ("n", "lambda_momentum", "zeta", "topology", "compressor")


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    problem: str
    topology: str
    n: int
    compressor: str
    gamma: float
    eta: float
    iters: int
    d: int | None = None
    zeta: float = 0.0
    sigma: float = 0.0
    data_path: str | None = None
    test_path: str | None = None
    reg_lambda: float = 0.05
    shuffle: bool = False
    p: float | None = None
    degree: int | None = None
    rows: int | None = None
    cols: int | None = None
    weights: str = "metropolis"
    lambda_momentum: float = 1.0
    batch: int = 1
    init_batch: int = 1
    eval_every: int = 1
    seed: int = 0
    x0: float = 0.0
    output: str = "results/run.csv"

    def validate(self) -> "ExperimentConfig":
        """Raise :class:`ConfigError` naming the first offending key."""

        def bad(key, msg):
            raise ConfigError(f"{key}: {msg}", key=key)

        if self.algorithm not in STEPS:
            bad("algorithm", f"unknown algorithm {self.algorithm!r}")
        if self.problem not in ("synthetic", "logreg"):
            bad("problem", f"unknown problem {self.problem!r}")
        if self.topology not in KINDS:
            bad("topology", f"unknown topology {self.topology!r}")
        if self.weights not in ("metropolis", "lazy"):
            bad("weights", f"unknown weighting {self.weights!r}")
        if self.n < 1:
            bad("n", "must be at least 1")
        if not 0 < self.gamma <= 1:
            bad("gamma", "must lie in (0, 1]")
        if not self.eta > 0:
            bad("eta", "must be positive")
        if not 0 < self.lambda_momentum <= 1:
            bad("lambda_momentum", "must lie in (0, 1]")
        for key in ("batch", "init_batch", "eval_every"):
            if getattr(self, key) < 1:
                bad(key, "must be at least 1")
        if self.iters < 0:
            bad("iters", "must be non-negative")
        if self.problem == "synthetic":
            if self.d is None:
                bad("d", "required for problem = synthetic")
            if self.d < 1:
                bad("d", "must be at least 1")
            if self.zeta < 0:
                bad("zeta", "must be non-negative")
            if self.sigma < 0:
                bad("sigma", "must be non-negative")
        else:
            if self.data_path is None:
                bad("data_path", "required for problem = logreg")
            for key in ("data_path", "test_path"):
                path = getattr(self, key)
                if path is not None and not Path(path).is_file():
                    bad(key, f"file not found: {path}")
            if self.reg_lambda < 0:
                bad("reg_lambda", "must be non-negative")
        # logreg dimension is only known after loading, so only the syntax is checked there
        dim = self.d if self.problem == "synthetic" else 2**31
        try:
            parse_compressor(self.compressor, dim)
        except SpecError as exc:
            bad("compressor", str(exc))
        return self


_REQUIRED = ("algorithm", "problem", "topology", "n", "compressor", "gamma", "eta", "iters")
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_PATH_KEYS = ("data_path", "test_path")


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    if "bool" in kind:
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {raw!r}")
        return value
    return raw


def parse_config(text: str, base_dir: str | Path = ".") -> ExperimentConfig:
    """Parse config text; see the module docstring for the keys."""
    values: dict = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}", line=lineno, key=key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", line=lineno, key=key)
        try:
            values[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {key!r}: {exc}", line=lineno, key=key) from None
        lines[key] = lineno
    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}", key=key)
    for key in _PATH_KEYS:
        if key in values and not Path(values[key]).is_absolute():
            values[key] = str(Path(base_dir) / values[key])
    if "output" in values and not Path(values["output"]).is_absolute():
        values["output"] = str(Path(base_dir) / values["output"])
    config = ExperimentConfig(**values)
    try:
        return config.validate()
    except ConfigError as exc:
        raise ConfigError(str(exc), line=lines.get(exc.key), key=exc.key) from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


# ---------------------------------------------------------------------------
# running


def build_components(config: ExperimentConfig):
    """Return ``(problem, topology, compressor, hyperparams, test_metric)``."""
    params = {k: getattr(config, k) for k in ("p", "degree", "rows", "cols") if getattr(config, k) is not None}
    topo = build_topology(config.topology, config.n, params, seed=config.seed, weights=config.weights)
    test_metric = None
    if config.problem == "synthetic":
        problem = synth_new(config.n, config.d, config.zeta, config.sigma, seed=config.seed)
    else:
        train = load_libsvm(config.data_path)
        width = train.d
        test = None
        if config.test_path is not None:
            test = load_libsvm(config.test_path)
            width = max(width, test.d)
        shards = shard(train, config.n, shuffle=config.shuffle, seed=config.seed)
        problem = logreg_oracles(shards, config.reg_lambda, config.batch, d=width)
        if test is not None:
            test_metric = lambda x, _t=test, _w=width: accuracy(x, _t, _w)
    compressor = parse_compressor(config.compressor, problem.d)
    hp = HyperParams(
        gamma=config.gamma,
        eta=config.eta,
        lambda_momentum=config.lambda_momentum,
        batch=config.batch,
        init_batch=config.init_batch,
        iters=config.iters,
    )
    return problem, topo, compressor, hp, test_metric


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(records: Sequence[MetricsRecord], path: str | Path | None = None) -> str:
    """Render records as CSV text, writing it to ``path`` when given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([_cell(getattr(r, k)) for k in CSV_HEADER])
    text = buf.getvalue()
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return text


def _output_path(path: str | Path) -> Path:
    override = os.environ.get(OUTPUT_ENV)
    path = Path(path)
    return Path(override) / path.name if override else path


def steady_state_error(records: Sequence[MetricsRecord], frac: float = 0.1) -> float:
    """Mean ``grad_norm_sq`` over the final ``frac`` of the records (at least one)."""
    if not records:
        raise ValidationError("no records")
    k = max(1, math.ceil(frac * len(records)))
    return float(np.mean([r.grad_norm_sq for r in records[-k:]]))


def iterations_to_target(records: Sequence[MetricsRecord], target: float) -> int | None:
    """First round whose ``grad_norm_sq`` is at most ``target``, or None."""
    for r in records:
        if r.grad_norm_sq <= target:
            return r.t
    return None


@dataclass(frozen=True)
class RunResult:
    config: ExperimentConfig
    path: Path | None
    records: list[MetricsRecord]

    @property
    def steady_state(self) -> float:
        return steady_state_error(self.records)

    def summary(self) -> dict:
        last = self.records[-1]
        return {
            "algorithm": self.config.algorithm,
            "rounds": last.t,
            "bits_cum": last.bits_cum,
            "final_grad_norm_sq": last.grad_norm_sq,
            "steady_state": self.steady_state,
            "output": str(self.path) if self.path else "",
        }


def run_experiment(
    config: ExperimentConfig,
    output: str | Path | None = None,
    write: bool = True,
    stop: Callable[[MetricsRecord], bool] | None = None,
) -> RunResult:
    """Run one configured experiment and write its CSV.

    ``output`` overrides ``config.output``; ``MOTEF_OUTPUT_DIR`` overrides
    both directories.
    """
    problem, topo, compressor, hp, test_metric = build_components(config)
    try:
        records = run(
            problem,
            topo,
            compressor,
            hp,
            algorithm=config.algorithm,
            eval_every=config.eval_every,
            rng=config.seed,
            x0=np.full(problem.d, config.x0),
            test_metric=test_metric,
            stop=stop,
        )
    except Exception as exc:
        if hasattr(exc, "add_note"):
            exc.add_note(f"while running {config.algorithm} on {config.problem}/{config.topology} n={config.n}")
        raise
    path = None
    if write:
        path = _output_path(output if output is not None else config.output)
        write_csv(records, path)
    return RunResult(config, path, records)


# ---------------------------------------------------------------------------
# sweeps


def _coerce_axis(axis: str, value):
    if axis not in SWEEPABLE:
        raise ValidationError(f"axis {axis!r} is not sweepable; choose from {SWEEPABLE}")
    if axis == "n":
        return int(value)
    if axis in ("lambda_momentum", "zeta"):
        return float(value)
    return str(value)


def _member_path(base: str | Path, axis: str, value) -> Path:
    base = Path(base)
    return base.with_name(f"{base.stem}_{axis}={value}{base.suffix or '.csv'}")


def _sweep_member(args):
    config, path = args
    try:
        result = run_experiment(config, output=path)
        return {"steady_state": result.steady_state, "path": str(result.path), "error": ""}
    except Exception as exc:  # reported in the summary, the sweep continues
        return {"steady_state": math.nan, "path": "", "error": f"{type(exc).__name__}: {exc}"}


@dataclass(frozen=True)
class SweepResult:
    axis: str
    rows: list[dict]
    summary_path: Path | None

    @property
    def steady_states(self) -> list[float]:
        return [r["steady_state"] for r in self.rows]

    def table(self) -> str:
        out = [f"{self.axis:>16}  {'seed':>6}  {'steady_state':>14}  status"]
        for r in self.rows:
            status = "ok" if not r["error"] else "FAILED " + r["error"]
            out.append(f"{str(r['value']):>16}  {r['seed']:>6}  {r['steady_state']:>14.6g}  {status}")
        return "\n".join(out)


def sweep(
    config: ExperimentConfig,
    axis: str,
    values: Sequence,
    parallel: bool = False,
    max_workers: int | None = None,
) -> SweepResult:
    """Run ``config`` once per value of ``axis``.

    Run ``i`` uses seed ``config.seed ^ i`` and writes its own CSV next to
    ``config.output``; a summary CSV with the steady-state error of every run
    is written as ``<output stem>_summary.csv``. Failed runs are flagged
    rather than aborting the sweep.
    """
    values = list(values)
    if not values:
        raise ValidationError("sweep needs at least one value")
    members = []
    for i, raw in enumerate(values):
        value = _coerce_axis(axis, raw)
        if axis == "compressor":
            cfg = replace(config, compressor=value, seed=config.seed ^ i)
        else:
            cfg = replace(config, **{axis: value}, seed=config.seed ^ i)
        try:
            cfg.validate()
        except ConfigError as exc:
            raise ValidationError(f"{axis}={value}: {exc}") from None
        members.append((cfg, _output_path(_member_path(config.output, axis, value))))
    if parallel and len(members) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(_sweep_member, members))
    else:
        outcomes = [_sweep_member(m) for m in members]
    rows = [
        {"value": _coerce_axis(axis, v), "seed": cfg.seed, **out}
        for v, (cfg, _), out in zip(values, members, outcomes)
    ]
    summary = _output_path(Path(config.output).with_name(f"{Path(config.output).stem}_{axis}_summary.csv"))
    summary.parent.mkdir(parents=True, exist_ok=True)
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([axis, "seed", "steady_state", "path", "error"])
        for r in rows:
            w.writerow([r["value"], r["seed"], _cell(r["steady_state"]), r["path"], r["error"]])
    return SweepResult(axis, rows, summary)


# ---------------------------------------------------------------------------
# stepsize tuning


def _tune_member(args):
    config, target = args
    stop = lambda r: r.grad_norm_sq <= target or not math.isfinite(r.grad_norm_sq) or r.grad_norm_sq > 1e12
    records = run_experiment(config, write=False, stop=stop).records
    return iterations_to_target(records, target)


def tune(
    config: ExperimentConfig,
    grid: dict[str, Sequence],
    target: float,
    parallel: bool = False,
    max_workers: int | None = None,
) -> tuple[ExperimentConfig | None, int | None, list[tuple[dict, int | None]]]:
    """Grid search for the fewest rounds to ``grad_norm_sq <= target``.

    Every run stops at the target, on divergence or after ``config.iters``
    rounds. Sequential searches also cap each run at the best count found so
    far, since a slower run cannot win; the optimum is unchanged.

    Returns the best config, its round count (None when nothing reached the
    target) and the ``(params, rounds)`` pairs tried, with None for runs that
    missed the target within their budget.
    """
    keys = list(grid)
    combos = [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    if not combos:
        raise ValidationError("tuning grid is empty")
    configs = [replace(config, **c) for c in combos]
    if parallel and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            jobs = [(c, target) for c in configs]
            counts = list(pool.map(_tune_member, jobs, chunksize=max(1, len(jobs) // 64)))
    else:
        counts = []
        budget = config.iters
        for cfg in configs:
            k = _tune_member((replace(cfg, iters=min(cfg.iters, budget)), target))
            counts.append(k)
            if k is not None:
                budget = min(budget, k)
    best = None
    for cfg, k in zip(configs, counts):
        if k is not None and (best is None or k < best[1]):
            best = (cfg, k)
    tried = list(zip(combos, counts))
    if best is None:
        return None, None, tried
    return best[0], best[1], tried
