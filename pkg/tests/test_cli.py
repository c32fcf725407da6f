import subprocess
import sys

import numpy as np
import pytest

from regtrack.harness.cli import main
from regtrack.harness.imageio import read_corners


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "syn"
    assert main(["synth", "--out", str(out), "--frames", "6", "--seed", "2"]) == 0
    return out


def test_synth_writes_sequence(synth_dir):
    assert len(list((synth_dir / "frames").iterdir())) == 6
    assert read_corners(synth_dir / "groundtruth.txt").shape == (6, 4, 2)


def test_track_and_eval(synth_dir, tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["track", "--seq", str(synth_dir / "frames"), "--gt", str(synth_dir / "groundtruth.txt"),
                 "--sm", "esm", "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "success_2px = 1.0000" in text and "failed_frames = 0" in text
    assert main(["eval", "--result", str(out / "track_corners.txt"),
                 "--gt", str(synth_dir / "groundtruth.txt")]) == 0
    assert "mean_mcd" in capsys.readouterr().out


def test_config_file_and_flag_precedence(synth_dir, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("sm = iclk\nam = ncc\n")
    out = tmp_path / "run"
    code = main(["track", "--config", str(cfg), "--am", "ssd", "--seq", str(synth_dir / "frames"),
                 "--gt", str(synth_dir / "groundtruth.txt"), "--out", str(out)])
    assert code == 0
    header = (out / "track_corners.txt").read_text().splitlines()[0]
    assert header.split()[1:3] == ["iclk", "ssd"]


def test_localize(tmp_path, capsys):
    out = tmp_path / "loc"
    assert main(["synth", "--out", str(out), "--mode", "crops", "--size", "400",
                 "--crop-size", "100", "--frames", "4"]) == 0
    code = main(["localize", "--ref", str(out / "reference.pgm"), "--seq", str(out / "frames"),
                 "--gt", str(out / "groundtruth.txt")])
    assert code == 0
    assert "success_2px = 1.0000" in capsys.readouterr().out


def test_bench_prints_rate(capsys):
    assert main(["bench", "--sm", "iclk", "--updates", "5"]) == 0
    assert "updates/sec" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["track", "--sm", "nope"],
    ["track", "--resolution", "0x5", "--seq", "x"],
    ["track"],
    ["bench", "--corner-sigma", "-1"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse rejects unknown choices itself
        code = exc.code
    assert code == 2
    assert capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path, capsys):
    assert main(["track", "--config", str(tmp_path / "none.cfg")]) == 2


def test_unreadable_frame_exits_1(synth_dir, capsys):
    (synth_dir / "frames" / "frame00002.pgm").write_bytes(b"P5\n")
    code = main(["track", "--seq", str(synth_dir / "frames"), "--gt", str(synth_dir / "groundtruth.txt")])
    assert code == 1
    assert "frame 2" in capsys.readouterr().err


def test_degenerate_template_exits_1(tmp_path, capsys):
    from regtrack.harness.imageio import write_sequence
    write_sequence(tmp_path / "flat", [np.full((60, 60), 9.0)] * 2)
    code = main(["track", "--seq", str(tmp_path / "flat"), "--am", "ncc",
                 "--init", "10,10,40,10,40,40,10,40"])
    assert code == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "regtrack.harness.cli", "eval",
                           "--result", str(tmp_path / "a"), "--gt", str(tmp_path / "b")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
