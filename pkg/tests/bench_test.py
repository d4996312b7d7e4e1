import os
import sys
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.append(project_root)

import json

import numpy as np
import pytest
from click.testing import CliRunner

from core.bench.builders import build_dataset, build_instance, train_learner
from core.bench.config import BenchConfig, build_grid, load_config, with_overrides
from core.bench.io import file_digest, load_dataset, load_instance, read_csv, write_csv
from core.bench.presets import PRESETS, get_preset, preset_names
from core.bench.sweep import run_sweep
from core.bench.verify import VerificationSuite
from core.utils.errors import ConfigError, ConvergenceError, PreconditionError, UnstableMatrixError
from ui.bench_cli import cli, exit_codes


def write_config(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def test_defaults_resolve():
    config = load_config()
    assert config.construction.kind == "stable"
    assert config.construction.state_dim == config.construction.k + 2
    assert config.eval_H == config.data.H


@pytest.mark.parametrize("overrides", [
    {'construction': {'mu': 0.75}},
    {'construction': {'kind': 'stable', 'k': 2, 'd': 5}},
    {'construction': {'kind': 'unstable', 'rho': 0.9}},
    {'learner': {'kind': 'transformer'}},
    {'data': {'n': -1}},
    {'unknown_section': {}},
])
def test_invalid_config_raises(overrides):
    with pytest.raises(ConfigError):
        load_config(None, overrides)


def test_config_file_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(bad))


def test_flags_override_file(tmp_path):
    path = write_config(tmp_path / "cfg.json", {'seed': 3, 'data': {'n': 10, 'H': 5}})
    config = load_config(path, {'seed': None, 'data': {'n': 20}})
    assert config.seed == 3
    assert (config.data.n, config.data.H) == (20, 5)


def test_with_overrides_validates():
    config = with_overrides(BenchConfig(), {'learner': {'kind': 'zero'}})
    assert config.learner.kind == "zero"
    with pytest.raises(ConfigError):
        with_overrides(config, {'evaluation': {'delta': 1.5}})


def test_output_root_falls_back_to_env(output_root):
    assert BenchConfig().output.root() == output_root
    assert str(with_overrides(BenchConfig(), {'output': {'out': 'elsewhere'}}).output.root()) == "elsewhere"


def test_grid_cap():
    grid = build_grid({'n': [1, 2], 'H': [4, 8], 'seed': [0, 1, 2]})
    assert grid.size == 12
    assert len(grid.cells()) == 6
    assert grid.horizons == (4, 8)
    with pytest.raises(ConfigError):
        build_grid({'n': list(range(100)), 'seed': list(range(100)), 'max_cells': 1000})
    with pytest.raises(ConfigError):
        build_grid({'H': []})


def test_preset_names_and_aliases():
    assert set(PRESETS) == {"figure1", "figure2", "rates", "unstable", "gambler"}
    assert get_preset("policy_zoo") is get_preset("figure1")
    assert get_preset("training_curve") is get_preset("figure2")
    sweep_preset = next(p for p in cli.commands["sweep"].params if p.name == "preset")
    assert set(sweep_preset.type.choices) == set(preset_names())
    assert {"figure1", "figure2", "policy_zoo", "training_curve"} <= set(preset_names())
    with pytest.raises(ConfigError):
        get_preset("nope")


def test_same_seed_same_instance_and_data():
    config = load_config(None, {'data': {'n': 12, 'H': 4}})
    a, b = build_instance(config), build_instance(config)
    assert a.instance_id == b.instance_id
    da, db = build_dataset(config, a), build_dataset(config, b)
    assert all(np.array_equal(x.states, y.states) for x, y in zip(da.trajectories, db.trajectories))
    other = build_instance(with_overrides(config, {'seed': 1}))
    assert other.instance_id != a.instance_id


def test_bc_needs_stable_construction():
    config = load_config(None, {'construction': {'kind': 'gambler'}, 'data': {'n': 0}})
    inst = build_instance(config)
    with pytest.raises(ConfigError):
        train_learner(config, inst, build_dataset(config, inst))


def test_unknown_hyperparameter_rejected():
    config = load_config(None, {'learner': {'kind': 'mlp', 'hyperparameters': {'depth': 3}}, 'data': {'n': 4, 'H': 2}})
    inst = build_instance(config)
    with pytest.raises(ConfigError):
        train_learner(config, inst, build_dataset(config, inst))


def test_gambler_sweep_and_resume(tmp_path):
    out = tmp_path / "gambler"
    preset = get_preset("gambler")
    axes = {'H': [1, 2, 3]}
    first = run_sweep(preset, BenchConfig(), out, grid_axes=axes, show_progress=False)
    assert first.status == "ok"
    assert first.resumed == []
    assert len(first.rows) == 9
    nonzero = {row['H']: row['value'] for row in first.rows if row['metric'] == 'nonzero_prob'}
    assert nonzero[1] == pytest.approx(0.5, abs=0.01)
    assert nonzero[3] == pytest.approx(0.125, abs=0.01)
    digest = file_digest(first.csv_path)

    second = run_sweep(preset, BenchConfig(), out, grid_axes=axes, show_progress=False)
    assert second.resumed == ["gamblers_ruin-l1-n0-s0"]
    assert file_digest(second.csv_path) == digest
    rows = read_csv(second.csv_path)
    assert list(rows[0].keys()) == ["instance_id", "policy_kind", "n", "H", "metric", "value", "stderr", "seed",
                                    "status", "step"]


def test_write_csv_uses_repr_floats(tmp_path):
    path = write_csv(tmp_path / "rows.csv", [{'metric': 'a', 'value': 0.1, 'H': 2}])
    assert read_csv(path)[0]['value'] == "0.1"


def test_cli_gen_is_reproducible(tmp_path):
    runner = CliRunner()
    out = tmp_path / "gen"
    args = ["gen", "--out", str(out), "--n", "6", "--H", "4", "--seed", "2"]
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    first = (out / "dataset.json").read_bytes()
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    assert (out / "dataset.json").read_bytes() == first
    assert load_dataset(out / "dataset.json").n == 6
    assert load_instance(out / "instance.json").d == 4


def test_cli_train_and_eval(tmp_path):
    runner = CliRunner()
    out = tmp_path / "run"
    assert runner.invoke(cli, ["gen", "--out", str(out), "--n", "32", "--H", "6"]).exit_code == 0
    result = runner.invoke(cli, ["train", "--out", str(out), "--instance", str(out / "instance.json"),
                                 "--dataset", str(out / "dataset.json"), "--learner", "bc"])
    assert result.exit_code == 0, result.output
    result = runner.invoke(cli, ["eval", "--out", str(out), "--instance", str(out / "instance.json"),
                                 "--policy", str(out / "policy.json"), "--m", "8", "--H", "6"])
    assert result.exit_code == 0, result.output
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report['H'] == 6 and report['m_rollouts'] == 8
    assert len(read_csv(out / "report.csv")) == 4


def test_cli_exit_codes(tmp_path):
    runner = CliRunner()
    out = tmp_path / "codes"
    assert runner.invoke(cli, ["gen", "--out", str(out), "--n", "4", "--H", "3"]).exit_code == 0

    missing = runner.invoke(cli, ["eval", "--out", str(out), "--instance", str(out / "instance.json"),
                                  "--learner", "bc"])
    assert missing.exit_code == 4

    bad = write_config(tmp_path / "bad.json", {'construction': {'mu': 0.9}})
    assert runner.invoke(cli, ["gen", "--config", bad, "--out", str(out)]).exit_code == 2
    assert runner.invoke(cli, ["gen", "--config", str(tmp_path / "none.json")]).exit_code == 4


def test_verify_reports_raising_check():
    suite = VerificationSuite(BenchConfig(), mu=0.75)
    with pytest.raises(PreconditionError):
        suite.check_pair_spectra()
    suite.checks = lambda: [("pair_spectra", "claim", suite.check_pair_spectra),
                            ("bump", "claim", suite.check_bump)]
    results = suite.run()
    assert [r.passed for r in results] == [False, True]
    assert "PreconditionError" in results[0].detail


def test_fast_verification_checks_pass():
    suite = VerificationSuite(load_config(None, {'data': {'H': 8}}))
    for check in (suite.check_pair_spectra, suite.check_cross_instability, suite.check_bump,
                  suite.check_expert_cost, suite.check_expert_risk, suite.check_cross_gain_probe,
                  suite.check_eiiss, suite.check_switching, suite.check_concentric,
                  suite.check_rotation_norms):
        passed, detail, _ = check()
        assert passed, detail


@pytest.mark.slow
def test_wrong_completion_compounds_and_right_one_does_not():
    passed, detail, ratio = VerificationSuite(BenchConfig()).check_compounding_gap()
    assert passed, detail
    assert ratio >= 20.0


@pytest.mark.parametrize("error, code", [
    (ConfigError("bad mu"), 2),
    (PreconditionError("state left the domain"), 3),
    (UnstableMatrixError("radius above one"), 3),
    (ConvergenceError("iteration cap"), 3),
    (ValueError("corrupt policy file"), 3),
    (FileNotFoundError("missing.json"), 4),
])
def test_exit_code_mapping(error, code):
    @exit_codes
    def command():
        raise error

    with pytest.raises(SystemExit) as info:
        command()
    assert info.value.code == code


@pytest.mark.slow
def test_cli_verify_bad_mu_exits_five(tmp_path):
    runner = CliRunner()
    result = runner.invoke(cli, ["verify", "--out", str(tmp_path / "v"), "--mu", "0.75"])
    assert result.exit_code == 5
    report = json.loads((tmp_path / "v" / "verify.json").read_text(encoding="utf-8"))
    assert any(c['name'] == 'pair_spectra' and not c['passed'] for c in report['checks'])
