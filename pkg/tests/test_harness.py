import json
import os

import pytest

from sits_tempo import harness
from sits_tempo.data import SynthSpec
from sits_tempo.errors import ConfigurationError
from sits_tempo.harness import (
    APPENDIX_LAYOUT,
    ExperimentSpec,
    ResultsTable,
    Trial,
    emit_report,
    load_results,
    parse_experiment_text,
    preset,
    run_experiment,
)
from sits_tempo.models import ModelConfig
from sits_tempo.training import TrainingConfig

TINY = SynthSpec(k=3, t=12, c=3, n=150, seed=4)
FAST = TrainingConfig(batch_size=16, max_epochs=3)
METRICS = ("oa", "f1", "f1_macro", "n_params", "epochs", "best_epoch", "status")


def tcnn(conv, fc=16, filt=3):
    return ModelConfig("temporal_cnn", 0.2, nb_conv_layers=2, nb_conv_units=conv, nb_fc_units=fc, filter_size=filt)


def grid_spec(out_dir=None, trials=None, **kw):
    trials = trials or [Trial(tcnn(4), FAST), Trial(tcnn(8), FAST)]
    return ExperimentSpec("tiny", "synthetic", trials, synth=TINY, out_dir=out_dir, **kw)


def metrics(row):
    return {k: row[k] for k in METRICS}


@pytest.fixture(scope="module")
def grid_run(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("grid"))
    return out, run_experiment(grid_spec(out))


def test_two_row_grid_is_deterministic(grid_run):
    _, table = grid_run
    assert len(table) == 2 and all(r["status"] == "ok" for r in table.rows)
    assert [r["nb_conv_units"] for r in table.rows] == [4, 8]
    again = run_experiment(grid_spec())
    assert [metrics(r) for r in again.rows] == [metrics(r) for r in table.rows]


def test_from_grids_is_the_cartesian_product():
    spec = ExperimentSpec.from_grids("g", "synthetic", [tcnn(4), tcnn(8)], [FAST, FAST.with_(batch_size=8)])
    assert len(spec.trials) == 4
    assert [t.model.nb_conv_units for t in spec.trials] == [4, 4, 8, 8]


def test_rerun_with_manifest_trains_nothing(grid_run, monkeypatch):
    out, table = grid_run

    def boom(*args, **kwargs):
        raise AssertionError("a finished trial was retrained")

    monkeypatch.setattr(harness, "run_trial", boom)
    monkeypatch.setattr(harness, "load_splits", boom)
    again = run_experiment(grid_spec(out))
    assert again == table


def test_manifest_and_trial_artifacts(grid_run):
    out, table = grid_run
    with open(os.path.join(out, harness.MANIFEST)) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    assert sorted(r["key"] for r in lines) == sorted(r["key"] for r in table.rows)
    for row in table.rows:
        tdir = os.path.join(out, "trials", row["key"])
        assert sorted(os.listdir(tdir)) == ["confusion.csv", "evaluation.md", "train_log.csv", "train_log.txt"]


def test_single_row_reproduces_in_isolation(grid_run):
    _, table = grid_run
    alone = run_experiment(grid_spec(trials=[Trial(tcnn(8), FAST)]))
    assert alone.rows[0]["key"] == table.rows[1]["key"]
    assert alone.rows[0]["oa"] == pytest.approx(table.rows[1]["oa"], abs=1e-9)
    assert alone.rows[0]["f1"] == pytest.approx(table.rows[1]["f1"], abs=1e-9)


def test_execution_order_does_not_change_rows(grid_run):
    _, table = grid_run
    flipped = run_experiment(grid_spec(trials=[Trial(tcnn(8), FAST), Trial(tcnn(4), FAST)]))
    by_key = {r["key"]: metrics(r) for r in flipped.rows}
    assert {r["key"]: metrics(r) for r in table.rows} == by_key


def test_parallel_workers_match_serial(grid_run):
    _, table = grid_run
    parallel = run_experiment(grid_spec(workers=2))
    assert [metrics(r) for r in parallel.rows] == [metrics(r) for r in table.rows]


def test_seeds_multiply_rows():
    table = run_experiment(grid_spec(trials=[Trial(tcnn(4), FAST)], seeds=[0, 1]))
    assert [r["seed"] for r in table.rows] == [0, 1]
    assert table.rows[0]["key"] != table.rows[1]["key"]


def test_failed_trial_is_recorded_and_grid_continues(tmp_path):
    bad = tcnn(4, filt=15)  # longer than the 12-step series
    table = run_experiment(grid_spec(str(tmp_path), trials=[Trial(bad, FAST), Trial(tcnn(4), FAST)]))
    assert [r["status"] for r in table.rows] == ["failed", "ok"]
    assert "ConfigurationError" in table.rows[0]["error"] and "T=12" in table.rows[0]["error"]
    assert table.best_index == 1
    # failed trials are retried on the next run rather than skipped
    again = run_experiment(grid_spec(str(tmp_path), trials=[Trial(bad, FAST), Trial(tcnn(4), FAST)]))
    assert again.rows[0]["status"] == "failed"
    assert len(load_results(str(tmp_path))) == 2


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        ExperimentSpec("x", "mnist", [Trial(tcnn(4), FAST)])
    with pytest.raises(ConfigurationError):
        ExperimentSpec("x", "synthetic", [])
    with pytest.raises(ConfigurationError):
        ExperimentSpec("x", "synthetic", [Trial(tcnn(4), FAST)], seeds=[])
    with pytest.raises(ConfigurationError):
        ExperimentSpec("x", "synthetic", [Trial(tcnn(4), FAST)], mode="sweep")
    with pytest.raises(ConfigurationError):
        ExperimentSpec("x", "synthetic", [Trial(tcnn(0), FAST)])


# ----------------------------------------------------------------- tables

def row(layers, conv, fc, oa, **extra):
    base = dict(key=f"k{layers}{conv}{fc}", variant="temporal_cnn", nb_conv_layers=layers, nb_conv_units=conv,
                nb_fc_units=fc, batch_size=128, dropout=0.2, filter_size=5, oa=oa, seed=0, status="ok", error="",
                f1=None if oa is None else oa - 0.1)
    base.update(extra)
    return base


def test_single_row_markdown():
    md = ResultsTable([row(3, 128, 256, 95.02)]).to_markdown()
    lines = md.splitlines()
    assert len(lines) == 3
    assert lines[0] == "| " + " | ".join(h for h, _ in APPENDIX_LAYOUT) + " |"
    assert lines[2] == "| **3** | **128** | **256** | **128** | **0.200** | **5** | **95.02** |"


def test_appendix_columns_and_order():
    table = ResultsTable([row(3, 128, 256, 95.02), row(2, 128, 256, 93.28), row(3, 64, 512, 91.33),
                          row(3, 64, 64, 90.9)])
    lines = table.to_markdown().splitlines()
    assert lines[0] == "| NB_CONV_LAYERS | NB_CONV_UNITS | NB_FC_UNITS | BATCH_SIZE | DROPOUT | FILTER_SIZE | OA |"
    firsts = [tuple(c.strip("* ") for c in line.split("|")[1:4]) for line in lines[2:]]
    assert firsts == [("2", "128", "256"), ("3", "64", "64"), ("3", "64", "512"), ("3", "128", "256")]
    bold = [line for line in lines if "**" in line]
    assert bold == [lines[-1]] and "95.02" in bold[0]


def test_best_row_attains_max_and_ties_go_first():
    table = ResultsTable([row(2, 64, 64, 90.0), row(3, 64, 64, 92.0), row(4, 64, 64, 92.0),
                          row(5, 64, 64, None, status="failed")])
    assert table.best_index == 1
    assert table.best["oa"] == max(r["oa"] for r in table.rows if r["oa"] is not None)


def test_generic_layout_for_mixed_models():
    rows = [row(3, 128, 256, 95.0, reference_oa=95.0),
            dict(key="r", variant="rnn", config="L3 H256", oa=92.0, seed=0, status="ok", reference_oa=92.7)]
    md = ResultsTable(rows, "mix").to_markdown()
    assert md.startswith("## mix\n\n| model | config |")
    assert "reference OA" in md.splitlines()[2]
    with pytest.raises(ConfigurationError):
        ResultsTable([]).to_markdown()


def test_csv_round_trip(grid_run):
    _, table = grid_run
    assert ResultsTable.from_csv(table.to_csv()) == table
    hand = ResultsTable([row(3, 128, 256, 95.02, train_seconds=1 / 3, reference_oa=None)])
    assert ResultsTable.from_csv(hand.to_csv()) == hand


def test_report_is_byte_stable(grid_run, tmp_path):
    _, table = grid_run
    a = emit_report(table, str(tmp_path / "a"))
    b = emit_report(ResultsTable.from_csv(table.to_csv(), table.title), str(tmp_path / "b"))
    assert [os.path.basename(p) for p in a] == ["results.md", "results.csv", "accuracy.png", "timing.png"]
    for pa, pb in zip(a, b):
        with open(pa, "rb") as fa, open(pb, "rb") as fb:
            assert fa.read() == fb.read(), pa


def test_report_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        emit_report(ResultsTable([]), str(tmp_path))
    with pytest.raises(ConfigurationError):
        emit_report(ResultsTable([row(3, 8, 8, 50.0)]), str(tmp_path), formats="html", figures=False)


def test_load_results_prefers_csv_then_manifest(grid_run, tmp_path):
    out, table = grid_run
    from_manifest = load_results(out)
    assert {r["key"] for r in from_manifest.rows} == {r["key"] for r in table.rows}
    emit_report(table, str(tmp_path), figures=False)
    assert load_results(str(tmp_path)) == table
    with pytest.raises(FileNotFoundError):
        load_results(str(tmp_path / "nothing"))


# ---------------------------------------------------------------- presets

def test_filter_study_grids():
    assert [t.model.filter_size for t in preset("filter_study", "tiselac").trials] == [3, 5, 7]
    assert [t.model.filter_size for t in preset("filter_study", "sits_tsi").trials] == [3, 5, 7, 9]


def test_depth_study_grid():
    for ds in ("tiselac", "sits_tsi"):
        trials = preset("depth_study", ds).trials
        assert [t.model.nb_conv_layers for t in trials] == [2, 3, 4, 5]
        assert {(t.model.nb_conv_units, t.model.nb_fc_units) for t in trials} == {(128, 256)}


def test_dropout_study_grid():
    values = [t.model.dropout for t in preset("dropout_study").trials]
    assert values[0] == 0.1 and values[-1] == 0.5 and len(values) == 9
    assert values == sorted(values)


def test_width_grids_carry_reference_rows():
    tis = preset("width_tiselac")
    assert len(tis.trials) == 12 and tis.dataset == "tiselac"
    best = max(tis.trials, key=lambda t: t.reference_oa)
    assert (best.model.nb_conv_units, best.model.nb_fc_units, best.reference_oa) == (128, 256, 95.02)
    sits = preset("width_sits_tsi")
    assert [t.training.batch_size for t in sits.trials] == [256, 128, 128, 128]


def test_comparison_presets():
    spec = preset("comparison_tiselac")
    assert [t.model.variant for t in spec.trials] == list(harness.COMPARISON_ORDER)
    assert [t.reference_oa for t in spec.trials] == [95.0, 89.2, 88.2, 92.9, 92.7, 91.6]


def test_timing_mode_protocol():
    spec = preset("timing")
    assert spec.mode == "timing" and spec.dataset == "synthetic"
    for t in spec.resolved_trials():
        assert t.training.batch_size == 128 and t.training.max_epochs == 20
        assert t.training.early_stopping is None and t.training.lr_plateau is None
    inception = [t for t in spec.trials if t.model.variant == "inception_time"][0]
    assert inception.model.hidden == 256
    # grid mode leaves the recipes alone
    assert grid_spec().resolved_trials()[0].training == FAST


def test_desk_preset_covers_every_variant():
    spec = preset("desk_synthetic")
    assert sorted(t.model.variant for t in spec.trials) == sorted(harness.COMPARISON_ORDER)
    assert {t.training.max_epochs for t in spec.trials} == {harness.DESK_EPOCHS}


def test_unknown_preset_lists_names():
    with pytest.raises(ConfigurationError) as info:
        preset("everything")
    assert all(name in str(info.value) for name in harness.PRESETS)
    with pytest.raises(ConfigurationError):
        preset("filter_study", "synthetic")


def test_preset_overrides():
    spec = preset("filter_study", seeds=[1, 2], workers=3)
    assert spec.seeds == [1, 2] and spec.workers == 3


# ------------------------------------------------------------ spec files

EXPERIMENT = """
[experiment]
name = widths
dataset = synth
seeds = 0, 1
workers = 2

[model]
variant = temporal_cnn
nb_conv_layers = 2
nb_conv_units = 4, 8
nb_fc_units = 16
filter_size = 3
dropout = 0.2

[training]
batch_size = 16, 32
max_epochs = 2

[synth]
k = 3
t = 12
c = 3
n = 90

[split]
train_fraction = 0.7
val_fraction = 0.3
"""


def test_experiment_file_expands_grid():
    spec = parse_experiment_text(EXPERIMENT)
    assert spec.name == "widths" and spec.dataset == "synthetic" and spec.seeds == [0, 1] and spec.workers == 2
    assert len(spec.trials) == 4
    assert {(t.model.nb_conv_units, t.training.batch_size) for t in spec.trials} == {(4, 16), (4, 32), (8, 16),
                                                                                      (8, 32)}
    assert spec.synth.n == 90 and spec.split.train_fraction == 0.7


def test_experiment_file_without_training_uses_variant_recipes():
    text = "[experiment]\ndataset = synth\n[model]\nvariant = mcdcnn, time_cnn\ndropout = 0.2\n"
    spec = parse_experiment_text(text, "pair.ini")
    assert spec.name == "pair"
    assert [(t.model.variant, t.training.optimizer) for t in spec.trials] == [("mcdcnn", "sgd"),
                                                                              ("time_cnn", "adam")]


def test_experiment_file_errors():
    with pytest.raises(ConfigurationError, match="missing \\[model\\]"):
        parse_experiment_text("[experiment]\ndataset = synth\n")
    with pytest.raises(ConfigurationError):
        parse_experiment_text("[experiment]\n[model]\nvariant = temporal_cnn\n[synth]\nwobble = 3\n")
    with pytest.raises(ConfigurationError):
        parse_experiment_text("[[broken")


def test_readme_experiment_example_parses():
    readme = os.path.join(os.path.dirname(__file__), os.pardir, "README.md")
    with open(readme, encoding="utf-8") as fh:
        text = fh.read().split("```ini\n", 1)[1].split("```", 1)[0]
    spec = parse_experiment_text(text, "readme.ini")
    assert spec.dataset == "synthetic" and spec.seeds == [0, 1] and spec.workers == 2
    assert [t.model.nb_conv_units for t in spec.trials] == [64, 128]
    assert spec.trials[0].training.max_epochs == 50 and spec.synth.sigma == 0.1
