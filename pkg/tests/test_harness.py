import io
import json
import math
from dataclasses import replace
from pathlib import Path

import pytest
import yaml

from distgap.control import ControllerConfig, ControllerKind, Selection
from distgap.errors import FormatError, IncompleteTableError, ParameterError
from distgap.graphgen import CsbmParams
from distgap.harness import (
    CONTROL_CSV_HEADER,
    RUN_CSV_HEADER,
    RunConfig,
    SweepConfig,
    SweepRow,
    SweepTable,
    default_run_config,
    default_sweep_config,
    derive_seeds,
    emit_reports,
    fixed_controller,
    load_run_config,
    load_selections,
    load_sweep_config,
    run_controller_grid,
    run_fixed_grid,
    run_one,
    run_sweep,
    save_run_config,
    save_selections,
    save_sweep_config,
    select_best_fixed,
    write_run_result,
)
from distgap.model import ModelConfig
from distgap.task import TaskSpec

TINY = RunConfig(
    csbm=CsbmParams(n_nodes=40, p_in=0.3, p_out=0.1, feature_dim=6),
    task=TaskSpec(beta=0.5, r_star=2),
    model=ModelConfig(n_layers=1, n_heads=2, d_model=8, d_ff=8),
    epochs=3,
    eval_every=1,
)

ZERO_GAP = ControllerConfig(kind=ControllerKind.ZERO_GAP, lambda_init=0.0,
                            kappa=0.25, update_every=1, warmup_epochs=0)


def tiny_sweep(**kwargs):
    defaults = dict(base=replace(TINY, controller=ZERO_GAP),
                    betas=(0.0, 1.0), lambdas=(0.0, 1.0), seeds=(0,),
                    controllers=("zero_gap",))
    defaults.update(kwargs)
    return SweepConfig(**defaults)


def ok_row(beta, policy, lam, seed, **kwargs):
    fields = dict(beta=beta, policy=policy, lam=lam, seed=seed, status="ok",
                  error="", final_lambda=lam, train_acc=0.75, val_acc=0.5,
                  test_acc=0.5, mu_task=1.0, mu_attn=1.0, gap=0.0, w1=0.0,
                  regime="aligned")
    fields.update(kwargs)
    return SweepRow(**fields)


# ---------------------------------------------------------------------------
# configs and seeds


def test_derive_seeds_deterministic_and_distinct():
    a = derive_seeds(7)
    assert a == derive_seeds(7)
    assert len(set(a)) == 3
    assert a != derive_seeds(8)


def test_run_config_validation():
    with pytest.raises(ParameterError):
        replace(TINY, epochs=0)
    with pytest.raises(ParameterError):
        replace(TINY, eval_every=0)
    with pytest.raises(ParameterError):
        replace(TINY, learning_rate=0.0)


def test_sweep_config_validation():
    with pytest.raises(ParameterError):
        tiny_sweep(betas=())
    with pytest.raises(ParameterError):
        tiny_sweep(lambdas=(1.0, 1.0))
    with pytest.raises(ParameterError):
        tiny_sweep(controllers=("pid",))
    assert tiny_sweep(controllers=()).controllers == ()


def test_default_configs_build():
    sweep = default_sweep_config()
    assert sweep.base == default_run_config()
    assert len(sweep.betas) == 5 and len(sweep.lambdas) == 7
    assert len(sweep.seeds) == 5
    assert sweep.controllers == ("zero_gap", "target_gap")


def test_fixed_controller_widens_bounds():
    ctrl = fixed_controller(ControllerConfig(lambda_bounds=(-1.0, 3.0)), 5.0)
    assert ctrl.kind is ControllerKind.FIXED
    assert ctrl.lambda_init == 5.0
    assert ctrl.lambda_bounds == (-1.0, 5.0)


# ---------------------------------------------------------------------------
# single runs


def test_run_one_is_deterministic():
    a = run_one(TINY)
    b = run_one(TINY)
    assert a.eval_rows == b.eval_rows
    assert a.control_rows == b.control_rows == []
    assert a.n_valid == b.n_valid
    # epochs 0..3 with eval_every=1
    assert [r.epoch for r in a.eval_rows] == [0, 1, 2, 3]


def test_run_one_seed_changes_everything():
    a = run_one(TINY)
    b = run_one(replace(TINY, run_seed=1))
    assert a.eval_rows != b.eval_rows


def test_fixed_run_keeps_lambda_constant():
    cfg = replace(TINY, controller=fixed_controller(TINY.controller, 0.7))
    res = run_one(cfg)
    assert all(r.lam == 0.7 for r in res.eval_rows)
    assert res.control_rows == []


def test_gap_driven_run_moves_lambda():
    cfg = replace(TINY, controller=ZERO_GAP)
    res = run_one(cfg)
    assert len(res.control_rows) == 3  # one applied update per epoch
    assert [r.epoch for r in res.control_rows] == [0, 1, 2]
    assert all(r.target_gap == 0.0 for r in res.control_rows)
    assert res.final.lam == res.control_rows[-1].lam
    # lambda moves against the sign of the measured gap
    first = res.control_rows[0]
    assert first.lam == pytest.approx(-0.25 * first.measured_gap)


def test_run_artifacts_round_trip(tmp_path):
    cfg = replace(TINY, controller=ZERO_GAP)
    res = run_one(cfg, out_dir=tmp_path / "a")
    run_one(cfg, out_dir=tmp_path / "b")
    for name in ("run.csv", "control.csv", "final.json"):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"

    run_lines = (tmp_path / "a" / "run.csv").read_text().splitlines()
    assert run_lines[0] == RUN_CSV_HEADER
    assert len(run_lines) == 1 + len(res.eval_rows)
    ctrl_lines = (tmp_path / "a" / "control.csv").read_text().splitlines()
    assert ctrl_lines[0] == CONTROL_CSV_HEADER
    assert ctrl_lines[1].endswith(",0.0")  # zero-gap setpoint column

    payload = json.loads((tmp_path / "a" / "final.json").read_text())
    assert payload["epoch"] == 3
    assert payload["n_valid"] == res.n_valid
    assert payload["test_acc"] == res.final.test_acc


def test_fixed_run_emits_no_control_csv(tmp_path):
    write_run_result(run_one(TINY), tmp_path)
    assert (tmp_path / "run.csv").exists()
    assert not (tmp_path / "control.csv").exists()


# ---------------------------------------------------------------------------
# sweep table


def test_sweep_table_rejects_duplicates():
    table = SweepTable([ok_row(0.0, "fixed", 0.0, 0)])
    with pytest.raises(ParameterError):
        table.add(ok_row(0.0, "fixed", 0.0, 0, test_acc=0.9))


def test_sweep_table_sorts_rows():
    table = SweepTable([
        ok_row(1.0, "fixed", 0.0, 0),
        ok_row(0.0, "zero_gap", 0.0, 0),
        ok_row(0.0, "fixed", 1.0, 0),
        ok_row(0.0, "fixed", -1.0, 1),
    ])
    keys = [(r.beta, r.policy, r.lam, r.seed) for r in table.rows()]
    assert keys == sorted(keys)


def test_sweep_table_csv_round_trip():
    nan = float("nan")
    table = SweepTable([
        ok_row(0.0, "fixed", 0.5, 0, test_acc=0.625),
        SweepRow(beta=1.0, policy="fixed", lam=1.0, seed=2, status="error",
                 error='DegenerateTaskError: only 3 valid, need 30',
                 final_lambda=nan, train_acc=nan, val_acc=nan, test_acc=nan,
                 mu_task=nan, mu_attn=nan, gap=nan, w1=nan, regime=""),
        ok_row(1.0, "zero_gap", 0.0, 0, error=""),
    ])
    buf = io.StringIO()
    table.write_csv(buf)
    loaded = SweepTable.read_csv(io.StringIO(buf.getvalue()))
    assert len(loaded) == 3
    assert loaded.get(0.0, "fixed", 0.5, 0) == table.get(0.0, "fixed", 0.5, 0)
    bad = loaded.get(1.0, "fixed", 1.0, 2)
    assert bad.status == "error" and "DegenerateTaskError" in bad.error
    assert math.isnan(bad.test_acc)
    # a second serialization is byte-identical
    buf2 = io.StringIO()
    loaded.write_csv(buf2)
    assert buf2.getvalue() == buf.getvalue()


def test_sweep_table_quotes_commas_in_errors():
    table = SweepTable([ok_row(0.0, "fixed", 0.0, 0, status="error",
                               error="ValueError: a, b, and c")])
    buf = io.StringIO()
    table.write_csv(buf)
    loaded = SweepTable.read_csv(io.StringIO(buf.getvalue()))
    assert loaded.rows()[0].error == "ValueError: a, b, and c"


def test_sweep_table_rejects_malformed_csv():
    with pytest.raises(FormatError):
        SweepTable.read_csv(io.StringIO(""))
    with pytest.raises(FormatError):
        SweepTable.read_csv(io.StringIO("beta,policy\n"))
    good_header = "beta,policy,lambda,seed,status,error,final_lambda," \
                  "train_acc,val_acc,test_acc,mu_task,mu_A,gap,w1,regime"
    with pytest.raises(FormatError):
        SweepTable.read_csv(io.StringIO(good_header + "\n0.0,fixed,1.0\n"))


def test_sweep_table_filters():
    table = SweepTable([
        ok_row(0.0, "fixed", 0.0, 0),
        ok_row(0.0, "zero_gap", 0.0, 0),
        ok_row(0.0, "fixed", 1.0, 0, status="error", error="boom"),
    ])
    assert len(table.ok_rows()) == 2
    assert len(table.ok_rows("fixed")) == 1
    assert len(table.failed_rows()) == 1
    assert len(table.fixed_summaries()) == 1


def test_merged_tables_keep_all_rows():
    a = SweepTable([ok_row(0.0, "fixed", 0.0, 0)])
    b = SweepTable([ok_row(0.0, "zero_gap", 0.0, 0)])
    assert len(a.merged(b)) == 2
    with pytest.raises(ParameterError):
        a.merged(a)


# ---------------------------------------------------------------------------
# grids


def test_single_cell_grid_matches_run_one():
    sweep = tiny_sweep(betas=(0.5,), lambdas=(1.0,), seeds=(3,))
    table = run_fixed_grid(sweep)
    assert len(table) == 1
    row = table.get(0.5, "fixed", 1.0, 3)
    cfg = replace(
        TINY,
        task=replace(TINY.task, beta=0.5),
        controller=fixed_controller(ZERO_GAP, 1.0),
        run_seed=3,
    )
    final = run_one(cfg).final
    assert row.status == "ok"
    assert (row.test_acc, row.gap, row.w1) == (final.test_acc, final.gap, final.w1)
    assert row.final_lambda == 1.0


def test_grid_is_thread_count_invariant(tmp_path):
    sweep = tiny_sweep()
    serial = run_fixed_grid(sweep, threads=1)
    parallel = run_fixed_grid(sweep, threads=2)
    a, b = tmp_path / "serial.csv", tmp_path / "parallel.csv"
    serial.save(a)
    parallel.save(b)
    assert a.read_bytes() == b.read_bytes()


def test_controller_grid_needs_selections_for_target_gap():
    sweep = tiny_sweep(controllers=("target_gap",))
    with pytest.raises(ParameterError):
        run_controller_grid(sweep, selections=None)
    with pytest.raises(ParameterError):
        run_controller_grid(sweep, selections={0.0: Selection(1.0, 0.5, 0.5, 0.1)})


def test_run_sweep_pipeline():
    sweep = tiny_sweep()
    table, selections = run_sweep(sweep)
    # 2 betas x 2 lambdas x 1 seed fixed, plus 2 betas x 1 seed zero_gap
    assert len(table) == 6
    assert sorted(selections) == [0.0, 1.0]
    assert set(r.policy for r in table.rows()) == {"fixed", "zero_gap"}
    assert all(r.status == "ok" for r in table.rows())
    sel = select_best_fixed(table, sweep.betas)
    assert sel == selections
    with pytest.raises(IncompleteTableError):
        select_best_fixed(table, betas=[0.0, 0.25])


def test_worker_isolates_cell_failures():
    # n=2 cannot yield 30 valid nodes, so every cell fails but the grid runs.
    bad = tiny_sweep(base=replace(TINY, csbm=replace(TINY.csbm, n_nodes=2)),
                     betas=(0.5,), lambdas=(0.0,), seeds=(0,))
    table = run_fixed_grid(bad)
    row = table.rows()[0]
    assert row.status == "error"
    assert "DegenerateTaskError" in row.error or "EmptyGraphError" in row.error
    assert math.isnan(row.test_acc)


# ---------------------------------------------------------------------------
# reports


@pytest.fixture()
def report_inputs():
    table = SweepTable([
        ok_row(0.0, "fixed", 0.0, 0, test_acc=0.5, gap=0.25, w1=0.5),
        ok_row(0.0, "fixed", 0.0, 1, test_acc=0.75, gap=0.75, w1=1.0),
        ok_row(0.0, "fixed", 1.0, 0, test_acc=0.625, gap=-0.5, w1=0.25),
        ok_row(0.0, "fixed", 1.0, 1, test_acc=0.875, gap=-1.0, w1=0.75),
        ok_row(1.0, "fixed", 0.0, 0, test_acc=0.5, gap=1.5, w1=1.5),
        ok_row(1.0, "fixed", 2.0, 0, test_acc=0.75, gap=0.5, w1=0.5),
        ok_row(1.0, "zero_gap", 0.0, 0, final_lambda=0.5, test_acc=0.625),
        ok_row(1.0, "zero_gap", 0.0, 1, final_lambda=1.0, test_acc=0.875),
    ])
    selections = {
        0.0: Selection(lambda_star=1.0, val_acc=0.5, test_acc=0.75,
                       target_gap=-0.75),
        1.0: Selection(lambda_star=2.0, val_acc=0.5, test_acc=0.75,
                       target_gap=0.5),
    }
    return table, selections


def test_emit_reports_golden_panels(tmp_path, report_inputs):
    table, selections = report_inputs
    emit_reports(table, selections, tmp_path)

    assert (tmp_path / "panel_a.csv").read_text() == (
        "beta,source,lambda\n"
        "0.0,best_fixed,1.0\n"
        "1.0,best_fixed,2.0\n"
        "1.0,zero_gap,0.75\n"
    )
    assert (tmp_path / "panel_b.csv").read_text() == (
        "beta,policy,test_acc\n"
        "0.0,neutral,0.625\n"
        "0.0,best_fixed,0.75\n"
        "1.0,neutral,0.5\n"
        "1.0,best_fixed,0.75\n"
        "1.0,zero_gap,0.75\n"
    )
    assert (tmp_path / "panel_c.csv").read_text() == (
        "beta,lambda,gap\n"
        "0.0,0.0,0.5\n"
        "0.0,1.0,-0.75\n"
        "1.0,0.0,1.5\n"
        "1.0,2.0,0.5\n"
    )
    assert (tmp_path / "panel_d.csv").read_text() == (
        "beta,lambda,w1\n"
        "0.0,0.0,0.75\n"
        "0.0,1.0,0.5\n"
        "1.0,0.0,1.5\n"
        "1.0,2.0,0.5\n"
    )


def test_emit_reports_manifest(tmp_path, report_inputs):
    table, selections = report_inputs
    emit_reports(table, selections, tmp_path, sweep=tiny_sweep())
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["schema_version"] == 1
    assert set(manifest["versions"]) == {"distgap", "numpy"}
    assert manifest["betas"] == [0.0, 1.0]
    assert manifest["lambdas"] == [0.0, 1.0, 2.0]
    assert manifest["policies"] == ["fixed", "zero_gap"]
    assert manifest["n_rows"] == 8 and manifest["n_error"] == 0
    assert manifest["selections"]["1.0"]["lambda_star"] == 2.0
    assert manifest["config"]["sweep"]["betas"] == [0.0, 1.0]


def test_emit_reports_with_fixed_rows_only(tmp_path):
    table = SweepTable([ok_row(0.25, "fixed", 0.0, 0, test_acc=0.625)])
    selections = {0.25: Selection(0.0, 0.5, 0.625, 0.0)}
    emit_reports(table, selections, tmp_path)
    panel_a = (tmp_path / "panel_a.csv").read_text()
    assert panel_a == "beta,source,lambda\n0.25,best_fixed,0.0\n"
    panel_b = (tmp_path / "panel_b.csv").read_text()
    assert "zero_gap" not in panel_b and "target_gap" not in panel_b
    # beta 0.25 is not a representative beta, so panel_d stays empty
    assert (tmp_path / "panel_d.csv").read_text() == "beta,lambda,w1\n"


def test_emit_reports_is_byte_deterministic(tmp_path, report_inputs):
    table, selections = report_inputs
    emit_reports(table, selections, tmp_path / "x", sweep=tiny_sweep())
    emit_reports(table, selections, tmp_path / "y", sweep=tiny_sweep())
    for name in ("panel_a.csv", "panel_b.csv", "panel_c.csv", "panel_d.csv",
                 "manifest.json"):
        assert (tmp_path / "x" / name).read_bytes() == \
               (tmp_path / "y" / name).read_bytes()


# ---------------------------------------------------------------------------
# config files


def test_run_config_yaml_round_trip(tmp_path):
    cfg = replace(TINY, controller=ZERO_GAP, run_seed=9,
                  learning_rate=1e-4)
    path = tmp_path / "run.yaml"
    save_run_config(path, cfg)
    assert load_run_config(path) == cfg


def test_sweep_config_yaml_round_trip(tmp_path):
    sweep = tiny_sweep(seeds=(0, 1, 2), controllers=("zero_gap", "target_gap"))
    path = tmp_path / "sweep.yaml"
    save_sweep_config(path, sweep)
    assert load_sweep_config(path) == sweep


def test_partial_config_uses_defaults(tmp_path):
    path = tmp_path / "partial.yaml"
    path.write_text("task:\n  beta: 0.75\nrun:\n  epochs: 7\n")
    cfg = load_run_config(path)
    assert cfg.task.beta == 0.75
    assert cfg.epochs == 7
    assert cfg.csbm == default_run_config().csbm


@pytest.mark.parametrize("text", [
    "bogus: 1\n",
    "task:\n  beta: 0.5\n  betta: 0.5\n",
    "run:\n  epoch: 7\n",
    "controller:\n  kind: pid\n",
    "model:\n  d_modle: 8\n",
    "- a\n- b\n",
])
def test_bad_run_configs_rejected(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(FormatError):
        load_run_config(path)


def test_bad_sweep_section_rejected(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("sweep:\n  gammas: [1, 2]\n")
    with pytest.raises(FormatError):
        load_sweep_config(path)
    path.write_text("sweep:\n  controllers: [pid]\n")
    with pytest.raises(ParameterError):
        load_sweep_config(path)


def test_empty_config_is_the_default(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    assert load_run_config(path) == default_run_config()
    assert load_sweep_config(path) == default_sweep_config()


# ---------------------------------------------------------------------------
# selections files


def test_selections_round_trip(tmp_path):
    sel = {
        0.0: Selection(lambda_star=0.5, val_acc=0.7, test_acc=0.65,
                       target_gap=-0.125),
        1.0: Selection(lambda_star=2.0, val_acc=0.8, test_acc=0.75,
                       target_gap=0.5),
    }
    path = tmp_path / "selections.json"
    save_selections(path, sel)
    assert load_selections(path) == sel


@pytest.mark.parametrize("text", [
    "[]",
    '{"0.5": {"lambda_star": 1.0}}',
    '{"0.5": {"lambda_star": 1.0, "val_acc": 0.5, "test_acc": 0.5, '
    '"target_gap": 0.0, "extra": 1}}',
])
def test_malformed_selections_rejected(tmp_path, text):
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(FormatError):
        load_selections(path)
