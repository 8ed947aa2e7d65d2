"""Seeded experiment harness: single runs, grid sweeps, selection, reports.

A single run samples a graph and task from one run seed, trains the model
for a fixed number of epochs, and records periodic evaluation rows plus any
controller updates. A sweep crosses task mixtures (beta) with fixed bias
slopes (lambda) under a paired seed design: the run seed depends only on
the seed index, so every grid cell at the same index shares its graph,
splits and init. Controller runs reuse the same seeds.

All emitted artifacts (CSV tables, panel files, manifest) are byte
deterministic for a given config: floats are written with repr, rows are
sorted by key, and wall-clock time is never serialized.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
import yaml

from ._version import __version__
from .control import (
    ControllerConfig,
    ControllerKind,
    FixedRunSummary,
    Selection,
    controller_step,
    initial_controller_state,
    select_lambda_star,
)
from .diagnostics import attention_profile, mismatch_report, task_profile
from .errors import FormatError, ParameterError
from .graphgen import CsbmParams, all_pairs_spd, sample_csbm
from .model import (
    DEFAULT_LEARNING_RATE,
    ModelConfig,
    evaluate,
    forward,
    init_model,
    loss_and_grads,
    train_step,
)
from .task import TaskSpec, make_labels

SCHEMA_VERSION = 1

POLICY_FIXED = "fixed"
POLICY_ZERO_GAP = "zero_gap"
POLICY_TARGET_GAP = "target_gap"
CONTROLLER_POLICIES = (POLICY_ZERO_GAP, POLICY_TARGET_GAP)

RUN_CSV_HEADER = "epoch,lambda,train_acc,val_acc,test_acc,mu_task,mu_A,gap,w1,regime"
CONTROL_CSV_HEADER = "epoch,lambda,measured_gap,target_gap"
SWEEP_CSV_HEADER = (
    "beta,policy,lambda,seed,status,error,final_lambda,train_acc,val_acc,"
    "test_acc,mu_task,mu_A,gap,w1,regime"
)
# Panel files mirror the four figure panels: (a) selected and controller
# slopes per beta, (b) policy test accuracies per beta, (c) final gap over
# the fixed grid, (d) final W1 over the fixed grid at representative betas.
PANEL_A_HEADER = "beta,source,lambda"
PANEL_B_HEADER = "beta,policy,test_acc"
PANEL_C_HEADER = "beta,lambda,gap"
PANEL_D_HEADER = "beta,lambda,w1"
PANEL_D_BETAS = (0.0, 0.5, 1.0)


# ---------------------------------------------------------------------------
# configs


@dataclass(frozen=True)
class RunConfig:
    csbm: CsbmParams
    task: TaskSpec
    model: ModelConfig = ModelConfig()
    controller: ControllerConfig = ControllerConfig()
    epochs: int = 200
    eval_every: int = 10
    learning_rate: float = DEFAULT_LEARNING_RATE
    run_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.eval_every < 1:
            raise ParameterError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be > 0")


@dataclass(frozen=True)
class SweepConfig:
    base: RunConfig
    betas: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    lambdas: tuple[float, ...] = (-1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    controllers: tuple[str, ...] = CONTROLLER_POLICIES

    def __post_init__(self):
        for name in ("betas", "lambdas", "seeds"):
            vals = getattr(self, name)
            if len(vals) == 0:
                raise ParameterError(f"{name} must be nonempty")
            if len(set(vals)) != len(vals):
                raise ParameterError(f"{name} contains duplicates: {vals}")
        bad = [c for c in self.controllers if c not in CONTROLLER_POLICIES]
        if bad:
            raise ParameterError(
                f"unknown controller policies {bad}; valid: {CONTROLLER_POLICIES}"
            )


def default_run_config() -> RunConfig:
    """Benchmark defaults.

    Signal strength and feature noise are tuned so the locality of the task
    actually shows up in accuracy: weak enough that a node's own feature is
    not a shortcut, clean enough that shell means stay readable. The far
    shell sits at hop 2 so the default graph reaches it well inside its
    diameter, and the edge densities put mean degree near 12, high enough
    that hop-2 shells are populated on every seed but low enough that the
    distance-blind model keeps a visibly worse ceiling on local tasks.
    """
    return RunConfig(
        csbm=CsbmParams(
            n_nodes=300,
            p_in=0.10,
            p_out=0.025,
            signal_strength=0.08,
            feature_noise_sigma=0.1,
        ),
        task=TaskSpec(beta=0.5, r_star=2),
    )


def default_sweep_config() -> SweepConfig:
    return SweepConfig(base=default_run_config())


def derive_seeds(run_seed: int) -> tuple[int, int, int]:
    """Child seeds for graph sampling, split sampling and parameter init.
    All three follow from the run seed alone."""
    children = np.random.SeedSequence(run_seed).spawn(3)
    graph_seed, split_seed, param_seed = (
        int(c.generate_state(1)[0]) for c in children
    )
    return graph_seed, split_seed, param_seed


# ---------------------------------------------------------------------------
# single run


class EvalRow(NamedTuple):
    """Metrics after ``epoch`` completed training epochs (0 is the init)."""

    epoch: int
    lam: float
    train_acc: float
    val_acc: float
    test_acc: float
    mu_task: float
    mu_attn: float
    gap: float
    w1: float
    regime: str


class ControlRow(NamedTuple):
    """One applied controller update: the measurement, the slope after the
    update, and the setpoint the controller was driving toward."""

    epoch: int
    lam: float
    measured_gap: float
    target_gap: float


@dataclass
class RunResult:
    config: RunConfig
    eval_rows: list
    control_rows: list
    n_valid: int
    wall_time: float  # informational only, never serialized

    @property
    def final(self) -> EvalRow:
        return self.eval_rows[-1]


def run_one(cfg: RunConfig, out_dir=None) -> RunResult:
    """Train one model on one sampled task.

    The controller measures the mean-distance gap on the start-of-epoch
    forward pass (the same pass that supplies the gradients), so a slope
    update takes effect from the next epoch's attention onward. Evaluation
    rows come from a fresh forward after the weight update, at epoch 0,
    every ``eval_every`` epochs and at the last epoch.
    """
    t0 = time.perf_counter()
    graph_seed, split_seed, param_seed = derive_seeds(cfg.run_seed)
    g = sample_csbm(replace(cfg.csbm, seed=graph_seed))
    dm = all_pairs_spd(g)
    spec = replace(cfg.task, split_seed=split_seed)
    task = make_labels(g, dm, spec)
    mcfg = replace(
        cfg.model,
        param_seed=param_seed,
        lambda_dist_init=cfg.controller.lambda_init,
    )
    state = init_model(mcfg, g.feature_dim)
    ctrl = initial_controller_state(cfg.controller)
    pi_task = task_profile(g, dm, spec)
    gap_driven = cfg.controller.kind is not ControllerKind.FIXED

    eval_rows: list[EvalRow] = []
    control_rows: list[ControlRow] = []

    def record_eval(epoch: int, st) -> None:
        fwd = forward(g, dm, st)
        rep = mismatch_report(pi_task, attention_profile(fwd.attention, dm))
        eval_rows.append(EvalRow(
            epoch=epoch,
            lam=st.lambda_dist,
            train_acc=evaluate(fwd.logits, task, "train"),
            val_acc=evaluate(fwd.logits, task, "val"),
            test_acc=evaluate(fwd.logits, task, "test"),
            mu_task=rep.mu_task,
            mu_attn=rep.mu_attn,
            gap=rep.gap,
            w1=rep.w1,
            regime=rep.regime.value,
        ))

    record_eval(0, state)
    for epoch in range(cfg.epochs):
        fwd = forward(g, dm, state)
        _, grads = loss_and_grads(fwd, task, "train", state)
        if gap_driven:
            rep = mismatch_report(pi_task, attention_profile(fwd.attention, dm))
            stepped = controller_step(cfg.controller, ctrl, epoch, rep.gap)
            if stepped is not ctrl:
                ctrl = stepped
                state.lambda_dist = ctrl.lam
                control_rows.append(ControlRow(
                    epoch, ctrl.lam, rep.gap, cfg.controller.effective_target,
                ))
        state = train_step(state, grads, cfg.learning_rate)
        done = epoch + 1
        if done % cfg.eval_every == 0 or done == cfg.epochs:
            record_eval(done, state)

    result = RunResult(
        config=cfg,
        eval_rows=eval_rows,
        control_rows=control_rows,
        n_valid=task.n_valid,
        wall_time=time.perf_counter() - t0,
    )
    if out_dir is not None:
        write_run_result(result, out_dir)
    return result


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_run_result(result: RunResult, out_dir) -> None:
    """Emit run.csv (eval rows), control.csv (if the run was gap driven)
    and final.json into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "run.csv", "w") as f:
        f.write(RUN_CSV_HEADER + "\n")
        for row in result.eval_rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")
    if result.config.controller.kind is not ControllerKind.FIXED:
        with open(out / "control.csv", "w") as f:
            f.write(CONTROL_CSV_HEADER + "\n")
            for row in result.control_rows:
                f.write(",".join(_fmt(v) for v in row) + "\n")
    with open(out / "final.json", "w") as f:
        json.dump(final_payload(result), f, indent=2, sort_keys=True)
        f.write("\n")


# external column names for the EvalRow fields, matching RUN_CSV_HEADER
_EVAL_NAMES = dict(zip(EvalRow._fields, RUN_CSV_HEADER.split(",")))


def final_payload(result: RunResult) -> dict:
    final = result.final
    return {
        "run_seed": result.config.run_seed,
        "n_valid": result.n_valid,
        "epochs": result.config.epochs,
        **{_EVAL_NAMES[k]: getattr(final, k) for k in EvalRow._fields},
    }


# ---------------------------------------------------------------------------
# sweep table


class SweepRow(NamedTuple):
    beta: float
    policy: str  # fixed | zero_gap | target_gap
    lam: float  # grid slope for fixed rows, initial slope for controllers
    seed: int
    status: str  # ok | error
    error: str  # exception text when status is error, else empty
    final_lambda: float
    train_acc: float
    val_acc: float
    test_acc: float
    mu_task: float
    mu_attn: float
    gap: float
    w1: float
    regime: str


def _row_key(row: SweepRow) -> tuple:
    return (row.beta, row.policy, row.lam, row.seed)


class SweepTable:
    """Keyed collection of sweep rows; one row per (beta, policy, lambda,
    seed) cell. Iteration order is always sorted by key, which makes the
    CSV form independent of completion order and worker count."""

    def __init__(self, rows: Iterable[SweepRow] = ()):
        self._rows: dict[tuple, SweepRow] = {}
        for row in rows:
            self.add(row)

    def add(self, row: SweepRow) -> None:
        key = _row_key(row)
        if key in self._rows:
            raise ParameterError(f"duplicate sweep cell {key}")
        self._rows[key] = row

    def __len__(self) -> int:
        return len(self._rows)

    def __iter__(self):
        return iter(self.rows())

    def rows(self) -> list[SweepRow]:
        return [self._rows[k] for k in sorted(self._rows)]

    def get(self, beta: float, policy: str, lam: float, seed: int) -> SweepRow:
        return self._rows[(beta, policy, lam, seed)]

    def ok_rows(self, policy: str | None = None) -> list[SweepRow]:
        return [
            r for r in self.rows()
            if r.status == "ok" and (policy is None or r.policy == policy)
        ]

    def failed_rows(self) -> list[SweepRow]:
        return [r for r in self.rows() if r.status != "ok"]

    def fixed_summaries(self) -> list[FixedRunSummary]:
        return [
            FixedRunSummary(
                beta=r.beta, lam=r.lam, seed=r.seed, val_acc=r.val_acc,
                test_acc=r.test_acc, final_gap=r.gap,
            )
            for r in self.ok_rows(POLICY_FIXED)
        ]

    def merged(self, other: "SweepTable") -> "SweepTable":
        return SweepTable(list(self._rows.values()) + list(other._rows.values()))

    def write_csv(self, f) -> None:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SWEEP_CSV_HEADER.split(","))
        for row in self.rows():
            writer.writerow([_fmt(v) for v in row])

    @classmethod
    def read_csv(cls, f) -> "SweepTable":
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty sweep table") from None
        if header != SWEEP_CSV_HEADER.split(","):
            raise FormatError(f"unexpected sweep table header {header}")
        table = cls()
        for rec in reader:
            if len(rec) != len(SweepRow._fields):
                raise FormatError(f"bad sweep row (want {len(SweepRow._fields)} "
                                  f"fields): {rec}")
            table.add(SweepRow(
                beta=float(rec[0]), policy=rec[1], lam=float(rec[2]),
                seed=int(rec[3]), status=rec[4], error=rec[5],
                final_lambda=float(rec[6]), train_acc=float(rec[7]),
                val_acc=float(rec[8]), test_acc=float(rec[9]),
                mu_task=float(rec[10]), mu_attn=float(rec[11]),
                gap=float(rec[12]), w1=float(rec[13]), regime=rec[14],
            ))
        return table

    def save(self, path) -> None:
        with open(path, "w") as f:
            self.write_csv(f)

    @classmethod
    def load(cls, path) -> "SweepTable":
        with open(path) as f:
            return cls.read_csv(f)


# ---------------------------------------------------------------------------
# sweep execution


def fixed_controller(base: ControllerConfig, lam: float) -> ControllerConfig:
    lo, hi = base.lambda_bounds
    return replace(
        base,
        kind=ControllerKind.FIXED,
        lambda_init=lam,
        lambda_bounds=(min(lo, lam), max(hi, lam)),
    )


def _sweep_worker(item) -> SweepRow:
    (beta, policy, lam, seed), cfg = item
    try:
        res = run_one(cfg)
        final = res.final
        return SweepRow(
            beta=beta, policy=policy, lam=lam, seed=seed, status="ok", error="",
            final_lambda=final.lam, train_acc=final.train_acc,
            val_acc=final.val_acc, test_acc=final.test_acc,
            mu_task=final.mu_task, mu_attn=final.mu_attn, gap=final.gap,
            w1=final.w1, regime=final.regime,
        )
    except Exception as exc:  # per-cell crash isolation
        nan = float("nan")
        return SweepRow(
            beta=beta, policy=policy, lam=lam, seed=seed, status="error",
            error=f"{type(exc).__name__}: {exc}", final_lambda=nan,
            train_acc=nan, val_acc=nan, test_acc=nan, mu_task=nan,
            mu_attn=nan, gap=nan, w1=nan, regime="",
        )


def _execute(items: list, threads: int, progress=None) -> list[SweepRow]:
    rows = []
    if threads <= 1:
        for i, item in enumerate(items):
            rows.append(_sweep_worker(item))
            if progress:
                progress(i + 1, len(items), rows[-1])
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for i, row in enumerate(pool.map(_sweep_worker, items)):
                rows.append(row)
                if progress:
                    progress(i + 1, len(items), row)
    return rows


def _stderr_progress(done: int, total: int, row: SweepRow) -> None:
    print(
        f"[{done}/{total}] beta={row.beta} policy={row.policy} "
        f"lambda={row.lam} seed={row.seed} {row.status}",
        file=sys.stderr,
        flush=True,
    )


def _cell_config(sweep: SweepConfig, beta: float,
                 controller: ControllerConfig, seed: int) -> RunConfig:
    return replace(
        sweep.base,
        task=replace(sweep.base.task, beta=beta),
        controller=controller,
        run_seed=seed,
    )


def run_fixed_grid(sweep: SweepConfig, threads: int = 1,
                   progress=None) -> SweepTable:
    """Cross betas x lambdas x seeds with a fixed-slope controller."""
    items = []
    for beta in sweep.betas:
        for lam in sweep.lambdas:
            ctrl = fixed_controller(sweep.base.controller, lam)
            for seed in sweep.seeds:
                cfg = _cell_config(sweep, beta, ctrl, seed)
                items.append(((beta, POLICY_FIXED, lam, seed), cfg))
    return SweepTable(_execute(items, threads, progress))


def run_controller_grid(
    sweep: SweepConfig,
    selections: dict[float, Selection] | None,
    threads: int = 1,
    progress=None,
) -> SweepTable:
    """Run the requested gap-driven policies for every (beta, seed) pair.
    Target-gap runs take their setpoint from ``selections``."""
    base_ctrl = sweep.base.controller
    items = []
    for policy in sweep.controllers:
        for beta in sweep.betas:
            if policy == POLICY_ZERO_GAP:
                ctrl = replace(base_ctrl, kind=ControllerKind.ZERO_GAP)
            else:
                if selections is None or beta not in selections:
                    raise ParameterError(
                        f"target_gap policy needs a selection for beta={beta}"
                    )
                ctrl = replace(
                    base_ctrl,
                    kind=ControllerKind.TARGET_GAP,
                    target_gap=selections[beta].target_gap,
                )
            for seed in sweep.seeds:
                cfg = _cell_config(sweep, beta, ctrl, seed)
                items.append(((beta, policy, ctrl.lambda_init, seed), cfg))
    return SweepTable(_execute(items, threads, progress))


def select_best_fixed(
    table: SweepTable, betas: Iterable[float] | None = None
) -> dict[float, Selection]:
    """Validation-selected best fixed lambda per beta, with the mean final
    gap of the winning runs as the oracle controller target."""
    return select_lambda_star(table.fixed_summaries(), expected_betas=betas)


def run_sweep(
    sweep: SweepConfig, threads: int = 1, progress=None
) -> tuple[SweepTable, dict[float, Selection]]:
    """Full pipeline: fixed grid, selection, then controller runs. Returns
    the combined table and the per-beta selections."""
    table = run_fixed_grid(sweep, threads, progress)
    selections = select_best_fixed(table, sweep.betas)
    if sweep.controllers:
        ctrl_table = run_controller_grid(sweep, selections, threads, progress)
        table = table.merged(ctrl_table)
    return table, selections


# ---------------------------------------------------------------------------
# reports


def _mean(rows: list[SweepRow], field: str) -> float:
    return float(np.mean([getattr(r, field) for r in rows]))


def _grouped(rows: list[SweepRow], *fields: str) -> dict[tuple, list[SweepRow]]:
    out: dict[tuple, list[SweepRow]] = {}
    for r in rows:
        out.setdefault(tuple(getattr(r, f) for f in fields), []).append(r)
    return out


def emit_reports(
    table: SweepTable,
    selections: dict[float, Selection],
    out_dir,
    sweep: SweepConfig | None = None,
) -> None:
    """Write the four panel CSVs and a manifest.

    panel_a: the selected fixed slope plus each controller's mean final
    slope, per beta. panel_b: mean test accuracy of the neutral run, the
    best fixed run and each controller, per beta. panel_c: mean final gap
    per (beta, lambda) fixed cell. panel_d: mean final W1 per fixed cell,
    restricted to the representative betas. Controller rows are simply
    absent when the table has none.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fixed = table.ok_rows(POLICY_FIXED)
    by_cell = _grouped(fixed, "beta", "lam")
    betas = sorted({r.beta for r in fixed} | set(selections))

    def ctrl_rows(policy: str, beta: float) -> list[SweepRow]:
        return [r for r in table.ok_rows(policy) if r.beta == beta]

    with open(out / "panel_a.csv", "w") as f:
        f.write(PANEL_A_HEADER + "\n")
        for beta in betas:
            if beta in selections:
                f.write(f"{beta!r},best_fixed,"
                        f"{selections[beta].lambda_star!r}\n")
            for policy in CONTROLLER_POLICIES:
                rows = ctrl_rows(policy, beta)
                if rows:
                    f.write(f"{beta!r},{policy},"
                            f"{_mean(rows, 'final_lambda')!r}\n")

    with open(out / "panel_b.csv", "w") as f:
        f.write(PANEL_B_HEADER + "\n")
        for beta in betas:
            neutral = by_cell.get((beta, 0.0), [])
            if neutral:
                f.write(f"{beta!r},neutral,{_mean(neutral, 'test_acc')!r}\n")
            if beta in selections:
                f.write(f"{beta!r},best_fixed,"
                        f"{selections[beta].test_acc!r}\n")
            for policy in CONTROLLER_POLICIES:
                rows = ctrl_rows(policy, beta)
                if rows:
                    f.write(f"{beta!r},{policy},{_mean(rows, 'test_acc')!r}\n")

    with open(out / "panel_c.csv", "w") as f:
        f.write(PANEL_C_HEADER + "\n")
        for (beta, lam), rows in sorted(by_cell.items()):
            f.write(f"{beta!r},{lam!r},{_mean(rows, 'gap')!r}\n")

    with open(out / "panel_d.csv", "w") as f:
        f.write(PANEL_D_HEADER + "\n")
        for (beta, lam), rows in sorted(by_cell.items()):
            if beta in PANEL_D_BETAS:
                f.write(f"{beta!r},{lam!r},{_mean(rows, 'w1')!r}\n")

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "versions": {"distgap": __version__, "numpy": np.__version__},
        "betas": sorted({r.beta for r in table.rows()}),
        "lambdas": sorted({r.lam for r in table.rows()
                           if r.policy == POLICY_FIXED}),
        "seeds": sorted({r.seed for r in table.rows()}),
        "policies": sorted({r.policy for r in table.rows()}),
        "n_rows": len(table),
        "n_ok": len(table.ok_rows()),
        "n_error": len(table.failed_rows()),
        "selections": {
            repr(beta): selections[beta]._asdict() for beta in sorted(selections)
        },
    }
    if sweep is not None:
        manifest["config"] = sweep_config_to_dict(sweep)
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# YAML configs


_RUN_SECTIONS = ("csbm", "task", "model", "controller", "run")
_RUN_FIELDS = ("epochs", "eval_every", "learning_rate", "run_seed")
_SWEEP_FIELDS = ("betas", "lambdas", "seeds", "controllers")


def _check_keys(data: dict, allowed: Iterable[str], where: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise FormatError(f"unknown keys {unknown} in {where} "
                          f"(allowed: {sorted(allowed)})")


def _build_section(cls, data: dict, where: str):
    names = [f.name for f in dataclasses.fields(cls)]
    _check_keys(data, names, where)
    kwargs = dict(data)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise FormatError(f"bad {where} section: {exc}") from None


def _load_yaml(path) -> dict:
    with open(path) as f:
        data = yaml.safe_load(f)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise FormatError(f"config root must be a mapping, got {type(data).__name__}")
    return data


def _run_config_from_dict(data: dict) -> RunConfig:
    base = default_run_config()
    csbm = _build_section(CsbmParams, data.get("csbm", {}), "csbm") \
        if "csbm" in data else base.csbm

    task_data = dict(data.get("task", {}))
    if "split_fractions" in task_data:
        task_data["split_fractions"] = tuple(task_data["split_fractions"])
    task = _build_section(TaskSpec, task_data, "task") \
        if "task" in data else base.task

    model = _build_section(ModelConfig, data.get("model", {}), "model") \
        if "model" in data else base.model

    ctrl_data = dict(data.get("controller", {}))
    if "kind" in ctrl_data:
        try:
            ctrl_data["kind"] = ControllerKind(ctrl_data["kind"])
        except ValueError:
            raise FormatError(
                f"unknown controller kind {ctrl_data['kind']!r}; valid: "
                f"{[k.value for k in ControllerKind]}"
            ) from None
    if "lambda_bounds" in ctrl_data:
        ctrl_data["lambda_bounds"] = tuple(ctrl_data["lambda_bounds"])
    controller = _build_section(ControllerConfig, ctrl_data, "controller") \
        if "controller" in data else base.controller

    run_data = dict(data.get("run", {}))
    _check_keys(run_data, _RUN_FIELDS, "run")
    return RunConfig(csbm=csbm, task=task, model=model, controller=controller,
                     **run_data)


def load_run_config(path) -> RunConfig:
    """Load a run config. A ``sweep`` section, if present, is ignored so the
    same experiment file can drive both single runs and sweeps."""
    data = _load_yaml(path)
    _check_keys(data, _RUN_SECTIONS + ("sweep",), "config")
    return _run_config_from_dict({k: v for k, v in data.items() if k != "sweep"})


def load_sweep_config(path) -> SweepConfig:
    data = _load_yaml(path)
    _check_keys(data, _RUN_SECTIONS + ("sweep",), "config")
    base = _run_config_from_dict({k: v for k, v in data.items() if k != "sweep"})
    sweep_data = dict(data.get("sweep", {}))
    _check_keys(sweep_data, _SWEEP_FIELDS, "sweep")
    for name in _SWEEP_FIELDS:
        if name in sweep_data:
            sweep_data[name] = tuple(sweep_data[name])
    return SweepConfig(base=base, **sweep_data)


def run_config_to_dict(cfg: RunConfig) -> dict:
    ctrl = dataclasses.asdict(cfg.controller)
    ctrl["kind"] = cfg.controller.kind.value
    ctrl["lambda_bounds"] = list(cfg.controller.lambda_bounds)
    task = dataclasses.asdict(cfg.task)
    task["split_fractions"] = list(cfg.task.split_fractions)
    return {
        "csbm": dataclasses.asdict(cfg.csbm),
        "task": task,
        "model": dataclasses.asdict(cfg.model),
        "controller": ctrl,
        "run": {
            "epochs": cfg.epochs,
            "eval_every": cfg.eval_every,
            "learning_rate": cfg.learning_rate,
            "run_seed": cfg.run_seed,
        },
    }


def sweep_config_to_dict(cfg: SweepConfig) -> dict:
    out = run_config_to_dict(cfg.base)
    out["sweep"] = {
        "betas": list(cfg.betas),
        "lambdas": list(cfg.lambdas),
        "seeds": list(cfg.seeds),
        "controllers": list(cfg.controllers),
    }
    return out


def save_run_config(path, cfg: RunConfig) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(run_config_to_dict(cfg), f, sort_keys=True)


def save_sweep_config(path, cfg: SweepConfig) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(sweep_config_to_dict(cfg), f, sort_keys=True)


# ---------------------------------------------------------------------------
# selection round-trip files


def save_selections(path, selections: dict[float, Selection]) -> None:
    payload = {repr(beta): selections[beta]._asdict()
               for beta in sorted(selections)}
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def load_selections(path) -> dict[float, Selection]:
    with open(path) as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise FormatError("selections file must hold a JSON object")
    out = {}
    for key, val in data.items():
        fields = set(Selection._fields)
        if not isinstance(val, dict) or set(val) != fields:
            raise FormatError(f"bad selection entry for beta={key}: {val}")
        out[float(key)] = Selection(**val)
    return out
