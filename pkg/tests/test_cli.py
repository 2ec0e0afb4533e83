import json

import numpy as np
import pytest

from fovdiff import read_grid, tci
from fovdiff.cli import main

TINY_CONFIG = """
schedule.T = 40
sampler.n_steps = 8
sampler.U = 2
sampler.seed = 3
data.height = 12
data.width = 12
train.iterations = 30
train.batch_size = 8
train.embed_dim = 4
train.hidden = [16]
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(TINY_CONFIG)
    return path


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestExitCodes:
    def test_unknown_config_key_is_validation_failure(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("sampler.eta = 0.1\n")
        code = run_cli("-c", bad, "simulate", "--out", tmp_path / "d")
        assert code == 2
        assert "sampler.eta" in capsys.readouterr().err

    def test_wrong_variant_for_inpaint(self, tmp_path, tiny_config, capsys):
        cfg = tmp_path / "v.cfg"
        cfg.write_text(TINY_CONFIG + "sampler.variant = ddim\n")
        code = run_cli("-c", cfg, "inpaint", "--dataset", tmp_path, "--out", tmp_path)
        assert code == 2

    def test_missing_input_file(self, tmp_path):
        code = run_cli("inpaint", "--image", tmp_path / "a.difg",
                       "--mask", tmp_path / "m.difg", "--out", tmp_path / "o.difg")
        assert code == 2

    def test_bad_workers(self, tmp_path):
        assert run_cli("--workers", "0", "simulate", "--out", tmp_path) == 2


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    cfg = root / "run.cfg"
    cfg.write_text(TINY_CONFIG)
    assert run_cli("-c", cfg, "-q", "simulate", "--out", root / "data", "--n", "4") == 0
    assert (
        run_cli(
            "-c", cfg, "-q", "train",
            "--data", root / "data" / "test",
            "--out", root / "model.rpdm",
        )
        == 0
    )
    return root, cfg


class TestPipeline:

    def test_simulate_wrote_dataset(self, workspace):
        root, _ = workspace
        manifest = json.loads((root / "data" / "test" / "manifest.json").read_text())
        assert len(manifest["samples"]) == 4
        assert manifest["grid"] == [12, 12]

    def test_train_wrote_checkpoint(self, workspace):
        root, _ = workspace
        assert (root / "model.rpdm").read_bytes()[:4] == b"RPDM"

    def test_inpaint_batch_and_evaluate(self, workspace, capsys):
        root, cfg = workspace
        mlp_cfg = root / "mlp.cfg"
        mlp_cfg.write_text(
            TINY_CONFIG
            + f'denoiser.kind = mlp\ndenoiser.checkpoint = "{root / "model.rpdm"}"\n'
        )
        assert (
            run_cli(
                "-c", mlp_cfg, "-q", "inpaint",
                "--dataset", root / "data" / "test",
                "--out", root / "completed",
            )
            == 0
        )
        completed = sorted((root / "completed").iterdir())
        assert len(completed) == 4

        code = run_cli(
            "-q", "evaluate",
            "--dataset", root / "data" / "test",
            "--completed", root / "completed",
            "--out", root / "report",
            "--plot",
        )
        assert code == 0
        captured = capsys.readouterr()
        summary = json.loads(captured.out.strip())
        assert summary["samples"] == 4
        assert (root / "report.json").exists()
        assert (root / "report.csv").exists()
        assert (root / "report.svg").read_text().startswith("<svg")

    def test_inpaint_preserves_known_region(self, workspace):
        root, cfg = workspace
        mlp_cfg = root / "mlp2.cfg"
        mlp_cfg.write_text(
            TINY_CONFIG
            + f'denoiser.kind = mlp\ndenoiser.checkpoint = "{root / "model.rpdm"}"\n'
        )
        data_dir = root / "data" / "test"
        out = root / "single" / "s0000.difg"
        assert (
            run_cli(
                "-c", mlp_cfg, "-q", "inpaint",
                "--image", data_dir / "s0000_truncated.difg",
                "--mask", data_dir / "s0000_mask.difg",
                "--out", out,
            )
            == 0
        )
        mask = read_grid(data_dir / "s0000_mask.difg")
        truncated = read_grid(data_dir / "s0000_truncated.difg")
        completed = read_grid(out)
        inside = mask > 0.5
        assert np.max(np.abs(completed[inside] - truncated[inside])) < 1e-6

    def test_inpaint_dump_flag_writes_intermediate_levels(self, workspace):
        root, _ = workspace
        cfg = root / "dump.cfg"
        cfg.write_text(
            TINY_CONFIG
            + f'denoiser.kind = mlp\ndenoiser.checkpoint = "{root / "model.rpdm"}"\n'
            + "output.dump_every = 2\n"
        )
        data_dir = root / "data" / "test"
        out = root / "dumps" / "s0001.difg"
        assert (
            run_cli(
                "-c", cfg, "-q", "inpaint",
                "--image", data_dir / "s0001_truncated.difg",
                "--mask", data_dir / "s0001_mask.difg",
                "--out", out,
            )
            == 0
        )
        dumps = sorted(out.parent.glob("s0001_level*.difg"))
        # 8 outer steps dumped every 2nd one
        assert len(dumps) == 4
        assert read_grid(dumps[0]).shape == (12, 12)

    def test_inpaint_batch_worker_count_does_not_change_artifacts(self, workspace, tmp_path):
        root, _ = workspace
        cfg = root / "mlpw.cfg"
        cfg.write_text(
            TINY_CONFIG
            + f'denoiser.kind = mlp\ndenoiser.checkpoint = "{root / "model.rpdm"}"\n'
        )
        for workers, out in (("1", tmp_path / "c1"), ("2", tmp_path / "c2")):
            assert (
                run_cli(
                    "-c", cfg, "-q", "--workers", workers, "inpaint",
                    "--dataset", root / "data" / "test", "--out", out,
                )
                == 0
            )
        a = sorted((tmp_path / "c1").iterdir())
        b = sorted((tmp_path / "c2").iterdir())
        assert [f.name for f in a] == [f.name for f in b]
        for fa, fb in zip(a, b):
            assert fa.read_bytes() == fb.read_bytes()

    def test_evaluate_missing_completed_fails(self, workspace, capsys):
        root, _ = workspace
        partial = root / "partial"
        partial.mkdir()
        src = sorted((root / "completed").iterdir())[0]
        (partial / src.name).write_bytes(src.read_bytes())
        code = run_cli(
            "-q", "evaluate",
            "--dataset", root / "data" / "test",
            "--completed", partial,
            "--out", root / "partial_report",
        )
        assert code == 1
        assert "missing" in capsys.readouterr().err


class TestSampleCommand:
    def test_ddim_sampling_writes_grids(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text(TINY_CONFIG + "sampler.variant = ddim\n")
        assert run_cli("-c", cfg, "-q", "sample", "--out", tmp_path / "samples", "--n", "2") == 0
        grids = sorted((tmp_path / "samples").iterdir())
        assert [g.name for g in grids] == ["sample_0000.difg", "sample_0001.difg"]
        assert read_grid(grids[0]).shape == (12, 12)

    def test_seed_env_override(self, tmp_path, monkeypatch):
        cfg = tmp_path / "s.cfg"
        cfg.write_text(TINY_CONFIG + "sampler.variant = ddim\n")

        def one(seed_env, out):
            if seed_env is None:
                monkeypatch.delenv("DIFG_SEED", raising=False)
            else:
                monkeypatch.setenv("DIFG_SEED", seed_env)
            assert run_cli("-c", cfg, "-q", "sample", "--out", out) == 0
            return (out / "sample_0000.difg").read_bytes()

        base = one(None, tmp_path / "a")
        redo = one(None, tmp_path / "b")
        other = one("99", tmp_path / "c")
        again = one("99", tmp_path / "d")
        assert base == redo
        assert other == again
        assert base != other

    def test_bad_seed_env(self, tmp_path, monkeypatch):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("sampler.variant = ddim\n")
        monkeypatch.setenv("DIFG_SEED", "not-a-number")
        assert run_cli("-c", cfg, "-q", "sample", "--out", tmp_path / "x") == 2


class TestWorkers:
    def test_simulate_worker_count_does_not_change_artifacts(self, tmp_path, tiny_config):
        assert run_cli("-c", tiny_config, "-q", "simulate", "--out", tmp_path / "w1", "--n", "4") == 0
        assert (
            run_cli(
                "-c", tiny_config, "-q", "--workers", "2",
                "simulate", "--out", tmp_path / "w2", "--n", "4",
            )
            == 0
        )
        a = sorted((tmp_path / "w1" / "test").iterdir())
        b = sorted((tmp_path / "w2" / "test").iterdir())
        assert [f.name for f in a] == [f.name for f in b]
        for fa, fb in zip(a, b):
            assert fa.read_bytes() == fb.read_bytes()


class TestBenchmark:
    def test_end_to_end_smoke(self, tmp_path, capsys):
        cfg = tmp_path / "b.cfg"
        cfg.write_text(
            TINY_CONFIG
            + "data.truncation.tci_min = 0.02\ndata.truncation.tci_max = 0.5\n"
        )
        code = run_cli(
            "-c", cfg, "-q", "benchmark",
            "--out", tmp_path / "bench", "--n", "2", "--train-n", "6",
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out.strip())
        assert summary["samples"] == 2
        assert (tmp_path / "bench" / "report.json").exists()
        assert (tmp_path / "bench" / "model.rpdm").exists()
        assert len(list((tmp_path / "bench" / "completed").iterdir())) == 2
