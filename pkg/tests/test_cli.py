"""End-to-end command surface: tiny configs keep every invocation fast."""

import numpy as np
import pytest

from hybriddepth.cli import main
from hybriddepth.imgio import load_png, save_png
from hybriddepth.numerics import load_checkpoint

TINY = """
synth.height = 32
synth.width = 32
synth.scenes = 1
synth.planes = 2
model.stem_channels = 6
model.embed_dim = 8
model.heads = 2
model.num_res_blocks = 1
train.steps = 3
train.log_every = 0
stylize.shuffle_patch = 8
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY)
    return cfg


def run(*argv):
    return main([str(a) for a in argv])


class TestSynth:
    def test_produces_gated_dataset(self, tmp_path, tiny_cfg):
        out = tmp_path / "out"
        assert run("synth", "--config", tiny_cfg, "--out", out) == 0
        assert (out / "dataset" / "scene_000" / "frame_00.png").exists()
        assert (out / "manifest.txt").exists()

    def test_bad_extents_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("synth.height = 60\n")
        assert run("synth", "--config", cfg, "--out", tmp_path / "o") == 2
        assert "divisible" in capsys.readouterr().err

    def test_seed_reruns_byte_identical(self, tmp_path, tiny_cfg):
        a, b = tmp_path / "a", tmp_path / "b"
        run("synth", "--config", tiny_cfg, "--out", a)
        run("synth", "--config", tiny_cfg, "--out", b)
        for fa in sorted((a / "dataset" / "scene_000").iterdir()):
            fb = b / "dataset" / "scene_000" / fa.name
            assert fa.read_bytes() == fb.read_bytes()


class TestTrainEval:
    @pytest.fixture
    def dataset(self, tmp_path, tiny_cfg):
        out = tmp_path / "synth"
        run("synth", "--config", tiny_cfg, "--out", out)
        return out / "dataset"

    def test_train_writes_artifacts(self, tmp_path, tiny_cfg, dataset):
        out = tmp_path / "train"
        assert run("train", "--config", tiny_cfg, "--dataset", dataset, "--out", out) == 0
        assert (out / "checkpoint.mfc").exists()
        lines = (out / "loss.csv").read_text().splitlines()
        assert lines[0] == "step,photometric,smoothness,total"
        assert len(lines) == 4  # header + 3 steps

    def test_zero_steps_checkpoint_equals_init(self, tmp_path, tiny_cfg, dataset):
        out = tmp_path / "zero"
        assert run("train", "--config", tiny_cfg, "--dataset", dataset,
                   "--out", out, "--steps", 0) == 0
        from hybriddepth.config import load_config
        from hybriddepth.cli import _model_from
        state = load_checkpoint(out / "checkpoint.mfc")
        fresh = _model_from(load_config(tiny_cfg)).state_dict()
        assert set(state) == set(fresh)
        for k in state:
            np.testing.assert_array_equal(state[k], fresh[k])

    def test_train_deterministic(self, tmp_path, tiny_cfg, dataset):
        a, b = tmp_path / "ta", tmp_path / "tb"
        run("train", "--config", tiny_cfg, "--dataset", dataset, "--out", a)
        run("train", "--config", tiny_cfg, "--dataset", dataset, "--out", b)
        assert (a / "loss.csv").read_bytes() == (b / "loss.csv").read_bytes()
        assert (a / "checkpoint.mfc").read_bytes() == (b / "checkpoint.mfc").read_bytes()

    def test_eval_ground_truth_checkpoint_rows(self, tmp_path, tiny_cfg, dataset):
        train_out = tmp_path / "train"
        run("train", "--config", tiny_cfg, "--dataset", dataset, "--out", train_out)
        out = tmp_path / "eval"
        assert run("eval", "--config", tiny_cfg, "--dataset", dataset,
                   "--checkpoint", train_out / "checkpoint.mfc", "--out", out) == 0
        lines = (out / "metrics.csv").read_text().splitlines()
        assert lines[0].startswith("sample,abs_rel")
        assert lines[-1].startswith("aggregate,")
        assert len(lines) == 1 + 1 + 1  # header + 1 sample + aggregate
        assert (out / "depth_000.png").exists()

    def test_eval_missing_checkpoint_exit_2(self, tmp_path, tiny_cfg, dataset, capsys):
        assert run("eval", "--config", tiny_cfg, "--dataset", dataset,
                   "--checkpoint", tmp_path / "nope.mfc", "--out", tmp_path / "e") == 2
        assert "checkpoint" in capsys.readouterr().err

    def test_nonfinite_loss_exit_3_names_step(self, tmp_path, tiny_cfg, dataset,
                                              capsys, monkeypatch):
        # the bounded depth head keeps honest losses finite even under absurd
        # learning rates, so the non-finite path is driven directly
        import hybriddepth.cli as cli
        from hybriddepth.errors import NumericError

        calls = {"n": 0}

        def exploding(*a, **k):
            if calls["n"] >= 2:
                raise NumericError("non-finite loss component: photometric")
            calls["n"] += 1
            from hybriddepth.selfsup import LossBreakdown
            return LossBreakdown(0.1, 0.0, 0.1)

        monkeypatch.setattr(cli, "train_step", exploding)
        assert run("train", "--config", tiny_cfg, "--dataset", dataset,
                   "--out", tmp_path / "boom") == 3
        err = capsys.readouterr().err
        assert "numeric failure" in err and "step 2" in err


class TestStylize:
    @pytest.fixture
    def corpus(self, tmp_path):
        folder = tmp_path / "imgs"
        folder.mkdir()
        rng = np.random.default_rng(0)
        for i in range(3):
            save_png(folder / f"img_{i}.png", rng.uniform(0, 1, (32, 32, 3)))
        return folder

    def test_pencil_corpus(self, tmp_path, tiny_cfg, corpus):
        out = tmp_path / "styled"
        assert run("stylize", "--config", tiny_cfg, "--input", corpus,
                   "--style", "pencil", "--out", out) == 0
        outputs = sorted((out / "pencil").glob("*.png"))
        assert len(outputs) == 3
        img = load_png(outputs[0])
        assert np.max(np.abs(img[..., 0] - img[..., 1])) < 1e-6  # channel-degenerate

    def test_rerun_byte_identical(self, tmp_path, tiny_cfg, corpus):
        a, b = tmp_path / "sa", tmp_path / "sb"
        for out in (a, b):
            run("stylize", "--config", tiny_cfg, "--input", corpus,
                "--style", "shuffle", "--out", out)
        for fa in sorted((a / "shuffle").iterdir()):
            assert fa.read_bytes() == (b / "shuffle" / fa.name).read_bytes()

    def test_unknown_style_exit_2(self, tmp_path, tiny_cfg, corpus, capsys):
        assert run("stylize", "--config", tiny_cfg, "--input", corpus,
                   "--out", tmp_path / "x") == 0  # config default is valid
        bad = tmp_path / "bad.cfg"
        bad.write_text(TINY + "stylize.style = sepia\n")
        assert run("stylize", "--config", bad, "--input", corpus,
                   "--out", tmp_path / "y") == 2
        assert "pencil" in capsys.readouterr().err  # lists valid styles


class TestProbeBias:
    def test_probe_smoke_and_pairing_error(self, tmp_path, tiny_cfg, capsys):
        synth_out = tmp_path / "s"
        run("synth", "--config", tiny_cfg, "--out", synth_out)
        train_out = tmp_path / "t"
        run("train", "--config", tiny_cfg, "--dataset", synth_out / "dataset",
            "--out", train_out)

        originals = tmp_path / "orig"
        originals.mkdir()
        rng = np.random.default_rng(1)
        for i in range(4):
            save_png(originals / f"f{i}.png", rng.uniform(0, 1, (32, 32, 3)))
        for style in ("pencil", "shuffle"):
            run("stylize", "--config", tiny_cfg, "--input", originals,
                "--style", style, "--out", tmp_path / "styled")
        styled = tmp_path / "styled"
        out = tmp_path / "probe"
        assert run("probe-bias", "--config", tiny_cfg,
                   "--checkpoint", train_out / "checkpoint.mfc",
                   "--original", originals,
                   "--shape-dir", styled / "pencil",
                   "--texture-dir", styled / "shuffle",
                   "--out", out) == 0
        rows = (out / "bias.csv").read_text().splitlines()
        assert rows[0] == "dimension,mean_rho_shape,mean_rho_texture,assignment"
        assert len(rows) == 1 + 8  # embed_dim dimensions

        # unpaired corpora: drop one stylized file
        (styled / "pencil" / "f0.png").unlink()
        assert run("probe-bias", "--config", tiny_cfg,
                   "--checkpoint", train_out / "checkpoint.mfc",
                   "--original", originals,
                   "--shape-dir", styled / "pencil",
                   "--texture-dir", styled / "shuffle",
                   "--out", out) == 2
        assert "paired" in capsys.readouterr().err


class TestGradcheckCommand:
    def test_all_blocks_pass(self, tmp_path, capsys):
        cfg = tmp_path / "g.cfg"
        cfg.write_text(TINY)
        assert run("gradcheck", "--config", cfg, "--out", tmp_path / "g") == 0
        out = capsys.readouterr().out
        for block in ("stem", "encoder_layer", "token_attention", "gram_attention",
                      "fusion_stage", "full_model", "warp_photometric", "smoothness_loss"):
            assert block in out

    def test_corrupt_flag_fails_with_exit_3(self, tmp_path, capsys):
        cfg = tmp_path / "g.cfg"
        cfg.write_text(TINY)
        assert run("gradcheck", "--config", cfg, "--corrupt", "--out", tmp_path / "g") == 3
        err = capsys.readouterr()
        assert "corrupted_control" in err.out
        assert "failed" in err.err


def test_dump_config(capsys):
    assert main(["--dump-config"]) == 0
    out = capsys.readouterr().out
    assert "model.embed_dim = 16" in out
    assert "train.steps = 2000" in out


def test_no_command_prints_help(capsys):
    assert main([]) == 2
