"""CLI surface: determinism, variants, config files, end-to-end smoke."""

import json
from pathlib import Path

import numpy as np
import pytest

from srt.cli import main
from srt.model import load_model

GEN_ARGS = ["gen-data", "--scenes", "2", "--seed", "1", "--width", "16",
            "--height", "16", "--inputs", "3", "--targets", "2",
            "--min-objects", "2", "--max-objects", "3"]

TRAIN_ARGS = ["--steps", "3", "--batch-scenes", "1", "--rays", "32",
              "--warmup", "1", "--patch-factor", "4", "--checkpoint-every", "0"]


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert main(GEN_ARGS + ["--out", str(root / "train")]) == 0
    return root / "train"


@pytest.fixture(scope="module")
def checkpoint(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--data", str(dataset), "--out", str(out)] + TRAIN_ARGS) == 0
    return out / "model.srt"


class TestGenData:
    def test_deterministic_byte_identical(self, tmp_path):
        main(GEN_ARGS + ["--out", str(tmp_path / "a")])
        main(GEN_ARGS + ["--out", str(tmp_path / "b")])
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_different_seed_differs(self, tmp_path, dataset):
        args = list(GEN_ARGS)
        args[args.index("--seed") + 1] = "2"
        main(args + ["--out", str(tmp_path / "c")])
        assert tree_bytes(tmp_path / "c") != tree_bytes(Path(dataset))


class TestArgErrors:
    def test_unknown_subcommand_exits_nonzero(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["frobnicate"])
        assert e.value.code != 0
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_flag_exits_nonzero(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["gen-data", "--out", "x", "--bogus-flag", "1"])
        assert e.value.code != 0


class TestTrain:
    def test_train_writes_model_and_metrics(self, checkpoint):
        assert checkpoint.exists()
        assert (checkpoint.parent / "metrics.jsonl").exists()
        assert (checkpoint.parent / "state_final.srt").exists()

    def test_unposed_variant_has_three_input_channels(self, dataset, tmp_path):
        out = tmp_path / "up"
        assert main(["train", "--data", str(dataset), "--out", str(out),
                     "--variant", "unposed"] + TRAIN_ARGS) == 0
        cfg, params, _ = load_model(out / "model.srt")
        assert not cfg.posed
        assert cfg.input_channels == 3
        assert params["cnn.block0.conv1.w"].shape[2] == 3

    def test_config_file_supplies_defaults(self, dataset, tmp_path):
        cfg_file = tmp_path / "run.json"
        cfg_file.write_text(json.dumps({"train": {"steps": 2, "rays": 16,
                                                  "batch_scenes": 1, "warmup": 1,
                                                  "patch_factor": 4,
                                                  "checkpoint_every": 0}}))
        out = tmp_path / "cfgrun"
        assert main(["--config", str(cfg_file), "train", "--data", str(dataset),
                     "--out", str(out)]) == 0
        lines = (out / "metrics.jsonl").read_text().strip().splitlines()
        assert json.loads(lines[-1])["step"] <= 2

    def test_resume_continues(self, dataset, checkpoint, tmp_path):
        out = tmp_path / "resumed"
        state = checkpoint.parent / "state_final.srt"
        assert main(["train", "--data", str(dataset), "--out", str(out),
                     "--resume", str(state), "--steps", "5"] + TRAIN_ARGS[2:]) == 0
        _, _, meta = load_model(out / "model.srt")
        assert meta["step"] == 5


class TestDownstream:
    def test_eval_reports_json(self, dataset, checkpoint, tmp_path, capsys):
        out = tmp_path / "report.json"
        assert main(["eval", "--data", str(dataset), "--checkpoint", str(checkpoint),
                     "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert len(report["per_scene"]) == 2
        assert np.isfinite(report["psnr_mean"])

    def test_render_scene_targets_reports_psnr(self, dataset, checkpoint, tmp_path, capsys):
        scene_dir = sorted(p for p in Path(dataset).iterdir() if p.is_dir())[0]
        out = tmp_path / "frames"
        assert main(["render", "--scene", str(scene_dir), "--checkpoint",
                     str(checkpoint), "--out", str(out)]) == 0
        assert (out / "frame_0000.png").exists()
        msg = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert "psnr" in msg

    def test_train_semantic_freezes_encoder(self, dataset, checkpoint, tmp_path):
        out = tmp_path / "sem"
        assert main(["train-semantic", "--data", str(dataset), "--checkpoint",
                     str(checkpoint), "--out", str(out), "--steps", "2",
                     "--batch-scenes", "1", "--rays", "16", "--warmup", "1"]) == 0
        cfg, params, _ = load_model(out / "model_semantic.srt")
        assert cfg.semantic_classes == 3
        assert any(n.startswith("sem.") for n in params)
        base_cfg, base_params, _ = load_model(checkpoint)
        from srt.model import params_checksum
        shared = {k: v for k, v in params.items() if not k.startswith("sem.")}
        assert params_checksum(shared) == params_checksum(base_params)

    def test_benchmark_smoke(self, dataset, checkpoint, tmp_path, capsys):
        out = tmp_path / "bench.json"
        assert main(["benchmark", "--data", str(dataset), "--checkpoint",
                     str(checkpoint), "--frames", "4", "--scenes", "1",
                     "--out", str(out)]) == 0
        result = json.loads(out.read_text())
        assert result["video_encode_calls"] == 1

    def test_epi_writes_image(self, dataset, checkpoint, tmp_path):
        scene_dir = sorted(p for p in Path(dataset).iterdir() if p.is_dir())[0]
        out = tmp_path / "epi"
        assert main(["epi", "--scene", str(scene_dir), "--checkpoint", str(checkpoint),
                     "--out", str(out), "--frames", "4"]) == 0
        assert (out / "epi_model.png").exists()

    def test_attention_exports(self, dataset, checkpoint, tmp_path):
        scene_dir = sorted(p for p in Path(dataset).iterdir() if p.is_dir())[0]
        out = tmp_path / "attn"
        assert main(["attention", "--scene", str(scene_dir), "--checkpoint",
                     str(checkpoint), "--out", str(out), "--pixel", "8,8"]) == 0
        assert (out / "attention_raw.npz").exists()
