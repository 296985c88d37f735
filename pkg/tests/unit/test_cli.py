import json

import pytest

from dmtp import dispatch
from src.storage.scene_repository import SceneRepository
from tests.builders import line_scene


def _run(capsys, *argv: str) -> tuple[int, str, str]:
    code = dispatch(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestUsageErrors:
    def test_no_command(self, capsys):
        code, _, err = _run(capsys)
        assert code == 1
        assert err.startswith("usage error:")

    def test_unknown_family(self, capsys, tmp_path):
        code, _, err = _run(capsys, "gen-data", "--family", "roundabout", "--out", str(tmp_path))
        assert code == 1
        assert "roundabout" in err

    def test_unknown_config_key(self, capsys, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("EPOCH=3\n", encoding="utf-8")
        code, _, err = _run(capsys, "info-demo", "--config", str(config), "--out", str(tmp_path))
        assert code == 1
        assert err.startswith("usage error: unknown config key")

    def test_bad_config_value(self, capsys, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("EPOCHS=many\n", encoding="utf-8")
        code, _, err = _run(capsys, "info-demo", "--config", str(config), "--out", str(tmp_path))
        assert code == 1
        assert "invalid value for epochs" in err

    def test_seed_count_must_be_positive(self, capsys, tmp_path):
        code, _, _ = _run(
            capsys, "explain", "--data", str(tmp_path), "--oracle", "map", "--shapley-seeds", "0", "--out", str(tmp_path)
        )
        assert code == 1

    def test_checkpoint_and_oracle_exclude_each_other(self, capsys, tmp_path):
        code, _, _ = _run(
            capsys, "explain", "--data", str(tmp_path), "--oracle", "map", "--checkpoint", "c.npz", "--out", str(tmp_path)
        )
        assert code == 1

    def test_help_exits_cleanly(self, capsys):
        code, out, _ = _run(capsys, "--help")
        assert code == 0
        assert "gen-data" in out


class TestRuntimeErrors:
    def test_missing_checkpoint(self, capsys, tmp_path):
        code, _, err = _run(
            capsys, "predict", "--checkpoint", str(tmp_path / "absent.npz"), "--data", str(tmp_path), "--out", str(tmp_path)
        )
        assert code == 2
        assert err.startswith("missing file:")

    def test_malformed_prediction_file(self, capsys, tmp_path):
        predictions = tmp_path / "predictions.json"
        predictions.write_text("{", encoding="utf-8")
        code, _, err = _run(
            capsys, "evaluate", "--predictions", str(predictions), "--data", str(tmp_path), "--out", str(tmp_path)
        )
        assert code == 2
        assert err.startswith("schema mismatch:")

    def test_unknown_scene_is_a_runtime_failure(self, capsys, tmp_path):
        data = tmp_path / "data"
        assert _run(capsys, "gen-data", "--family", "irregular", "--count", "1", "--out", str(data))[0] == 0
        code, _, err = _run(
            capsys, "explain", "--data", str(data), "--oracle", "constant", "--scene-id", "nope", "--out", str(tmp_path)
        )
        assert code == 2
        assert err.startswith("runtime failure:")

    def test_dataset_with_mixed_horizons_is_a_runtime_failure(self, capsys, tmp_path):
        data = tmp_path / "mixed"
        SceneRepository(data).save_dataset([line_scene(), line_scene(t_fut=5, scene_id="line-000001")])
        code, _, err = _run(capsys, "train", "--data", str(data), "--out", str(tmp_path / "run"))
        assert code == 2
        assert err.startswith("runtime failure: scenes mix horizons")


def test_info_demo_writes_results_and_manifest(capsys, tmp_path):
    code, out, _ = _run(capsys, "info-demo", "--out", str(tmp_path))
    assert code == 0
    assert "xor" in out
    results = json.loads((tmp_path / "info_demo.json").read_text())
    assert results["xor"]["I(x1,x2;y)"] == pytest.approx(1.0)
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["command"] == "info-demo"
    assert manifest["outputs"]["info_demo"].endswith("info_demo.json")
