import os

import numpy as np
import pytest

from ecqsgd.cli import main
from ecqsgd.config import (
    ConfigError,
    parse_config,
    serialize_config,
)


BASE_CONFIG = """
problem.kind = quadratic
problem.d = 16
problem.n = 128
problem.seed = 3
problem.P = 2
trainer.eta = 0.02
trainer.T = 30
trainer.codec = ecq
trainer.alpha = 0.2
trainer.beta = 0.9
trainer.seed = 1
output.dir = {out}
output.prefix = smoke
repetitions = 2
"""


def write_config(tmp_path, text=None, **extra):
    out_dir = tmp_path / "out"
    body = (text or BASE_CONFIG).format(out=out_dir)
    for key, value in extra.items():
        body += f"{key} = {value}\n"
    path = tmp_path / "exp.cfg"
    path.write_text(body)
    return str(path), str(out_dir)


class TestConfigFormat:
    def test_roundtrip_identity(self):
        cfg = parse_config(BASE_CONFIG.format(out="out/x"))
        again = parse_config(serialize_config(cfg))
        assert serialize_config(again) == serialize_config(cfg)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key 'trainer.bogus'"):
            parse_config("trainer.bogus = 3\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("nonsense = 3\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("trainer.eta = 0.1\ntrainer.eta = 0.2\n")

    def test_type_errors_carry_key_path(self):
        with pytest.raises(ConfigError, match="trainer.T"):
            parse_config("trainer.T = soon\n")

    def test_bad_codec_rejected(self):
        with pytest.raises(ConfigError, match="trainer.codec"):
            parse_config("trainer.codec = zip\n")

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config("# comment\n\ntrainer.eta = 0.5\n")
        assert cfg.trainer.eta == 0.5


class TestRunCommand:
    def test_smoke_run_writes_csvs(self, tmp_path, capsys):
        cfg_path, out_dir = write_config(tmp_path)
        assert main(["run", cfg_path]) == 0
        files = sorted(os.listdir(out_dir))
        assert files == ["smoke_mean.csv", "smoke_rep0.csv", "smoke_rep1.csv"]
        text = (tmp_path / "out" / "smoke_rep0.csv").read_text()
        lines = text.splitlines()
        header = [l for l in lines if l.startswith("#")]
        data = [l for l in lines if not l.startswith("#")]
        assert any("ecqsgd" in l for l in header)
        assert "# trainer.eta = 0.02" in header
        assert "# status = ok" in header
        assert data[0].startswith("iteration,train_loss,")
        assert len(data) == 31  # column row + 30 iterations
        losses = [float(line.split(",")[1]) for line in data[1:]]
        assert all(np.isfinite(losses))

    def test_rerun_byte_identical(self, tmp_path):
        cfg_path, out_dir = write_config(tmp_path)
        assert main(["run", cfg_path]) == 0
        first = {f: open(os.path.join(out_dir, f), "rb").read() for f in os.listdir(out_dir)}
        assert main(["run", cfg_path]) == 0
        for name, blob in first.items():
            assert open(os.path.join(out_dir, name), "rb").read() == blob

    def test_thread_env_does_not_change_bytes(self, tmp_path, monkeypatch):
        cfg_path, out_dir = write_config(tmp_path)
        monkeypatch.setenv("ECQSGD_THREADS", "1")
        assert main(["run", cfg_path]) == 0
        first = open(os.path.join(out_dir, "smoke_mean.csv"), "rb").read()
        monkeypatch.setenv("ECQSGD_THREADS", "4")
        assert main(["run", cfg_path]) == 0
        assert open(os.path.join(out_dir, "smoke_mean.csv"), "rb").read() == first

    def test_config_error_exit_code(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("trainer.bogus = 1\n")
        assert main(["run", str(path)]) == 1

    def test_missing_file_exit_code(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.cfg")]) == 1

    def test_divergent_run_exit_code(self, tmp_path):
        text = BASE_CONFIG.replace("trainer.alpha = 0.2", "trainer.alpha = 0.9") \
                          .replace("problem.d = 16", "problem.d = 256") \
                          .replace("problem.n = 128", "problem.n = 512") \
                          .replace("trainer.T = 30", "trainer.T = 1500") \
                          .replace("repetitions = 2", "repetitions = 1")
        cfg_path, out_dir = write_config(tmp_path, text=text)
        assert main(["run", cfg_path]) == 3
        rep = open(os.path.join(out_dir, "smoke_rep0.csv")).read()
        assert "# status = diverged" in rep

    def test_state_save_and_resume(self, tmp_path):
        text = BASE_CONFIG.replace("repetitions = 2", "repetitions = 1")
        cfg_path, out_dir = write_config(tmp_path, text=text)
        state = str(tmp_path / "state.npz")
        assert main(["run", cfg_path, "--save-state", state]) == 0
        assert os.path.exists(state)
        assert main(["run", cfg_path, "--resume-state", state]) == 0


class TestVerifyCommand:
    def test_unstable_config_rejected(self, tmp_path, capsys):
        path = tmp_path / "unstable.cfg"
        path.write_text("trainer.alpha = 0.55\ntrainer.beta = 0.9\n")
        assert main(["verify-bounds", "--config", str(path)]) == 1
        assert "unstable regime" in capsys.readouterr().out

    def test_alpha_zero_marked_baseline(self, tmp_path, capsys):
        from ecqsgd.verify import check_suppression_ratio_decay

        result = check_suppression_ratio_decay(alpha=0.0)
        assert result.passed
        assert "QSGD baseline" in result.detail


class TestCodecBench:
    def test_table_shows_paper_ratio(self, capsys):
        assert main(["codec-bench", "--dims", "1000", "--s", "4", "--norms", "l2"]) == 0
        out = capsys.readouterr().out
        assert "7.94x" in out
        assert "yes" in out

    def test_ternary_row(self, capsys):
        assert main(["codec-bench", "--dims", "1000", "--s", "1", "--norms", "linf"]) == 0
        out = capsys.readouterr().out
        assert f"{32 + 2000:>11}" in out


class TestGenData:
    def test_classification_roundtrip(self, tmp_path):
        out = str(tmp_path / "synth.svm")
        code = main([
            "gen-data", "--kind", "classification", "--d", "50", "--n", "80",
            "--n-test", "20", "--seed", "4", "--out", out,
        ])
        assert code == 0
        from ecqsgd.problems import Task, load_libsvm

        ds = load_libsvm(out, n_features=50)
        assert ds.task is Task.LOG_LOSS
        assert ds.n_samples == 80
        test = load_libsvm(out + ".t", n_features=50)
        assert test.n_samples == 20

    def test_regression_output(self, tmp_path):
        out = str(tmp_path / "reg.svm")
        assert main([
            "gen-data", "--kind", "regression", "--d", "6", "--n", "30",
            "--seed", "2", "--out", out,
        ]) == 0
        from ecqsgd.problems import Task, load_libsvm

        ds = load_libsvm(out, n_features=6)
        assert ds.task is Task.SQUARED_LOSS
        assert ds.n_samples == 30
