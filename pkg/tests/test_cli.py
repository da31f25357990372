import json
from pathlib import Path

import pytest

from specsl import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    default_config,
    load_config,
    run_experiment,
    standard_target,
    summarize,
    target_from_spec,
    target_to_spec,
)
from specsl.cli import main


class TestConfig:
    @pytest.mark.parametrize("experiment", EXPERIMENTS)
    def test_roundtrip_through_dict(self, experiment):
        cfg = default_config(experiment)
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg

    @pytest.mark.parametrize("experiment", EXPERIMENTS)
    def test_roundtrip_through_json(self, experiment, tmp_path):
        cfg = default_config(experiment)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert load_config(path) == cfg

    def test_echo_drops_execution_fields(self):
        cfg = default_config("reparam")
        echo = cfg.echo()
        assert "thread_count" not in echo
        assert "out_dir" not in echo
        assert echo["experiment"] == "reparam"

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"experiment": "reparam", "bogus": 1})

    def test_unknown_experiment_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"experiment": "warp-drive"})

    def test_schema_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"experiment": "reparam", "schema": "specsl-config/99"})

    def test_overlay_keeps_defaults(self, tmp_path):
        path = tmp_path / "partial.json"
        path.write_text(json.dumps({"experiment": "verify-grs", "n_draws": 500}))
        cfg = load_config(path, experiment="verify-grs")
        assert cfg.n_draws == 500
        assert cfg.v_multipliers == [0.0, 1.0, 2.0, 3.0]

    def test_experiment_mismatch_rejected(self, tmp_path):
        path = tmp_path / "wrong.json"
        path.write_text(json.dumps({"experiment": "scaling"}))
        with pytest.raises(ConfigError):
            load_config(path, experiment="reparam")

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(experiment="reparam", thread_count=0)
        with pytest.raises(ConfigError):
            ExperimentConfig(experiment="correctness", K=-5)
        with pytest.raises(ConfigError):
            ExperimentConfig(experiment="correctness", seeds=[])


class TestTargetSpecs:
    @pytest.mark.parametrize("family", ["two-point", "gaussian", "mixture3"])
    @pytest.mark.parametrize("d", [1, 2])
    def test_roundtrip(self, family, d):
        target = standard_target(family, d)
        again = target_from_spec(target_to_spec(target))
        assert (again.weights == target.weights).all()
        assert (again.centers == target.centers).all()
        assert (again.stds == target.stds).all()

    def test_bad_spec_rejected(self):
        with pytest.raises(ConfigError):
            target_from_spec({"type": "cauchy"})
        with pytest.raises(ConfigError):
            target_from_spec({"type": "gaussians", "weights": [1.0]})


class TestCliExitCodes:
    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["definitely-not-a-command"]) == 2
        capsys.readouterr()

    def test_missing_summarize_args_is_usage_error(self, capsys):
        assert main(["summarize"]) == 2
        capsys.readouterr()

    def test_bad_config_file(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["reparam", "--config", str(path)]) == 3
        capsys.readouterr()

    def test_unknown_config_field(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"experiment": "reparam", "zzz": 1}))
        assert main(["reparam", "--config", str(path)]) == 3
        capsys.readouterr()

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        out = blocker / "results"
        assert main(["reparam", "--out", str(out)]) == 4
        capsys.readouterr()

    def test_failed_verdict_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "strict.json"
        cfg.write_text(json.dumps({"experiment": "reparam", "tol": 1e-30}))
        assert main(["reparam", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        capsys.readouterr()

    def test_success_exits_zero(self, tmp_path, capsys):
        assert main(["reparam", "--out", str(tmp_path / "o")]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out

    def test_too_few_correctness_seeds_is_config_error(self, tmp_path, capsys):
        # must be rejected before any sampling, not crash inside energy_test
        cfg = tmp_path / "few.json"
        cfg.write_text(json.dumps({"experiment": "correctness", "seeds": list(range(40))}))
        assert main(["correctness", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
        assert "seeds" in capsys.readouterr().err

    def test_too_few_exchangeability_samples_is_config_error(self, tmp_path, capsys):
        cfg = tmp_path / "few.json"
        cfg.write_text(json.dumps({"experiment": "exchangeability", "n_samples": 50}))
        assert main(["exchangeability", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
        assert "n_samples" in capsys.readouterr().err


@pytest.fixture(scope="module")
def grs_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("grs-tiny")
    cfg_path = out / "cfg.json"
    cfg_path.write_text(json.dumps({"experiment": "verify-grs", "n_draws": 2000}))
    code = main(["verify-grs", "--config", str(cfg_path), "--out", str(out)])
    return code, out


class TestResultFiles:
    def test_exit_zero(self, grs_run, capsys):
        code, _ = grs_run
        capsys.readouterr()
        assert code == 0

    def test_json_payload(self, grs_run):
        _, out = grs_run
        payload = json.loads((out / "verify-grs.json").read_text())
        assert payload["experiment"] == "verify-grs"
        assert payload["pass"] is True
        assert "config" in payload
        assert "thread_count" not in payload["config"]

    def test_csv_shape(self, grs_run):
        _, out = grs_run
        text = (out / "verify-grs.csv").read_text()
        assert "\r" not in text
        assert text.endswith("\n")
        lines = text.splitlines()
        header = lines[0].split(",")
        assert header[:4] == ["d", "v_over_sigma", "sigma", "n_draws"]
        assert len(lines) == 1 + 8  # 2 dims x 4 multipliers

    def test_csv_floats_roundtrip(self, grs_run):
        _, out = grs_run
        lines = (out / "verify-grs.csv").read_text().splitlines()
        header = lines[0].split(",")
        rate_col = header.index("reject_rate")
        for line in lines[1:]:
            value = line.split(",")[rate_col]
            assert repr(float(value)) is not None
            assert f"{float(value):.17g}" == value

    def test_rerun_is_byte_identical(self, grs_run, capsys, tmp_path):
        _, out = grs_run
        first_json = (out / "verify-grs.json").read_bytes()
        first_csv = (out / "verify-grs.csv").read_bytes()
        cfg_path = out / "cfg.json"
        assert main(["verify-grs", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
        capsys.readouterr()
        assert (tmp_path / "verify-grs.json").read_bytes() == first_json
        assert (tmp_path / "verify-grs.csv").read_bytes() == first_csv

    def test_summarize_reads_back(self, grs_run, capsys):
        _, out = grs_run
        code = main(["summarize", str(out / "verify-grs.json"), str(out / "verify-grs.csv")])
        printed = capsys.readouterr().out
        assert code == 0
        assert "verify-grs" in printed

    def test_summarize_rejects_foreign_json(self, tmp_path, capsys):
        path = tmp_path / "other.json"
        path.write_text(json.dumps({"hello": "world"}))
        assert main(["summarize", str(path)]) == 3
        capsys.readouterr()

    def test_summarize_failed_result_exits_one(self, tmp_path, capsys):
        path = tmp_path / "failed.json"
        path.write_text(json.dumps({"experiment": "reparam", "pass": False}))
        assert main(["summarize", str(path)]) == 1
        capsys.readouterr()


class TestSeedOverride:
    def test_seed_flag_changes_draws(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"experiment": "verify-grs", "n_draws": 2000}))
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        assert main(["verify-grs", "--config", str(cfg), "--out", str(a_dir)]) == 0
        assert (
            main(["verify-grs", "--config", str(cfg), "--out", str(b_dir), "--seed", "9"]) == 0
        )
        capsys.readouterr()
        a = json.loads((a_dir / "verify-grs.json").read_text())
        b = json.loads((b_dir / "verify-grs.json").read_text())
        assert a["config"]["seed"] == 0
        assert b["config"]["seed"] == 9
        assert (a_dir / "verify-grs.csv").read_bytes() != (b_dir / "verify-grs.csv").read_bytes()


def test_run_experiment_requires_fields():
    cfg = ExperimentConfig(experiment="correctness")
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_summarize_empty_is_usage_error():
    code, msg = summarize([])
    assert code == 2
    assert "no input" in msg
