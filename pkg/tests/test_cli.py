import numpy as np
import pytest

from xaichest.cli import main
from xaichest.harness import read_dataset, write_dataset
from xaichest.neural import FnnModel


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_full_command_chain(workdir, capsys):
    assert main(["dataset", "--channel", "vtv-us", "--scheme", "STA", "--snr", "30", "--symbols", "400", "--out", "d.xchd"]) == 0
    assert read_dataset("d.xchd")[0].shape == (400, 104)
    assert main(["train-utility", "--dataset", "d.xchd", "--arch", "8,8", "--epochs", "3", "--out", "u.xcfn"]) == 0
    assert FnnModel.load("u.xcfn").input_dim == 104
    assert main(["train-xai", "--utility", "u.xcfn", "--dataset", "d.xchd", "--lambda", "0.2",
                 "--arch", "8", "--epochs", "3", "--out", "n.xcfn"]) == 0
    assert main(["classify", "--xai-model", "n.xcfn", "--dataset", "d.xchd", "--threshold", "0.5", "--out", "m.csv"]) == 0
    rows = [l for l in (workdir / "m.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(rows) == 53
    assert main(["ber", "--channel", "vtv-us", "--scheme", "STA-FNN", "--models", "u.xcfn",
                 "--snr-grid", "20,30", "--frames", "3", "--out", "b1.csv"]) == 0
    assert main(["ber", "--channel", "vtv-us", "--scheme", "STA", "--snr-grid", "20,30",
                 "--frames", "3", "--out", "b0.csv"]) == 0
    capsys.readouterr()
    assert main(["report", "--inputs", "b0.csv", "b1.csv", "--target-ber", "1e-3"]) == 0
    assert "gain_dB" in capsys.readouterr().out


def test_config_file_and_override(workdir):
    (workdir / "d.cfg").write_text("channel = vti-us\nscheme = TRFI\nsnr = 10\nsymbols = 60\nout = a.xchd\n")
    assert main(["dataset", "--config", "d.cfg"]) == 0
    assert main(["dataset", "--config", "d.cfg", "--symbols", "70", "--out", "b.xchd"]) == 0
    assert read_dataset("a.xchd")[0].shape[0] == 60
    assert read_dataset("b.xchd")[0].shape[0] == 70
    (workdir / "bad.cfg").write_text("colour = blue\n")
    assert main(["dataset", "--config", "bad.cfg"]) == 2


def test_exit_codes(workdir):
    assert main(["dataset", "--channel", "mars", "--scheme", "STA", "--snr", "1", "--out", "x"]) == 2
    assert main(["dataset", "--channel", "vtv-us", "--scheme", "STA", "--snr", "loud", "--out", "x"]) == 2
    assert main(["train-utility", "--dataset", "missing.xchd", "--out", "u.xcfn"]) == 3
    assert main(["ber", "--channel", "vtv-us", "--scheme", "TRFI-FNN", "--models", str(workdir),
                 "--snr-grid", "20", "--frames", "1", "--out", "b.csv"]) == 3
    assert main(["report", "--inputs", "nope.csv"]) == 3
    big = np.full((64, 104), 1e30, dtype=np.float32)
    write_dataset("huge.xchd", big, big)
    with np.errstate(all="ignore"):
        assert main(["train-utility", "--dataset", "huge.xchd", "--epochs", "3", "--lr", "1", "--out", "u.xcfn"]) == 4


def test_missing_required_flag(workdir):
    assert main(["dataset", "--channel", "vtv-us"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2
