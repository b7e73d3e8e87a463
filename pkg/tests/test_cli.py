import numpy as np
import pytest

from xmodhash import dataio
from xmodhash.cli import build_parser, main
from xmodhash.retrieval import pack_codes, write_codes


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_class_labels(path, classes, c):
    labels = np.zeros((c, len(classes)))
    labels[classes, np.arange(len(classes))] = 1.0
    dataio.write_matrix(labels, path)


@pytest.fixture()
def synth_dir(tmp_path, capsys):
    out = tmp_path / "data"
    code, _, _ = run(capsys, "synth", "--n", "60", "--c", "3", "--d1", "8",
                     "--d2", "6", "--noise", "0.2", "--seed", "4", "--out", str(out))
    assert code == 0
    return out


def train_args(synth_dir, model_path, **overrides):
    args = {"--x1": str(synth_dir / "x1.amx"), "--x2": str(synth_dir / "x2.amx"),
            "--labels": str(synth_dir / "labels.amx"), "--out": str(model_path),
            "--bits": "8", "--k1": "16", "--k2": "16", "--max-iters": "4"}
    args.update(overrides)
    return ["train"] + [part for pair in args.items() for part in pair]


def test_synth_writes_three_files(synth_dir):
    for name in ("x1.amx", "x2.amx", "labels.amx"):
        assert (synth_dir / name).exists()


def test_synth_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        code, _, _ = run(capsys, "synth", "--n", "50", "--c", "4", "--out", str(out))
        assert code == 0
    for name in ("x1.amx", "x2.amx", "labels.amx"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_synth_validation_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--n", "3", "--c", "5",
                       "--out", str(tmp_path / "x"))
    assert code == 2
    assert "n >= c" in err


def test_train_end_to_end(synth_dir, tmp_path, capsys):
    model = tmp_path / "model.amh"
    code, out, _ = run(capsys, *train_args(synth_dir, model))
    assert code == 0
    assert model.exists()
    assert "final objective" in out and "sweeps" in out
    archive = dataio.load_model(model)
    assert archive.sections["B"].shape == (8, 60)
    assert archive.metadata["r"] == "8"
    history = [float(x) for x in archive.metadata["objective_history"].split(",")]
    assert all(b <= a + 1e-9 * abs(a) for a, b in zip(history, history[1:]))


def test_train_missing_labels_is_exit_2(synth_dir, tmp_path, capsys):
    code, _, err = run(capsys, *train_args(synth_dir, tmp_path / "m.amh",
                                           **{"--labels": str(synth_dir / "nope.amx")}))
    assert code == 2
    assert "nope.amx" in err


def test_train_deterministic(synth_dir, tmp_path, capsys):
    a, b = tmp_path / "a.amh", tmp_path / "b.amh"
    assert run(capsys, *train_args(synth_dir, a))[0] == 0
    assert run(capsys, *train_args(synth_dir, b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_encode_and_eval_pipeline(synth_dir, tmp_path, capsys):
    model = tmp_path / "model.amh"
    assert run(capsys, *train_args(synth_dir, model))[0] == 0
    codes1 = tmp_path / "c1.abc"
    codes2 = tmp_path / "c2.abc"
    for modality, out in ((1, codes1), (2, codes2)):
        features = synth_dir / f"x{modality}.amx"
        code, _, _ = run(capsys, "encode", "--model", str(model), "--features",
                         str(features), "--modality", str(modality), "--out", str(out))
        assert code == 0
    code, out, _ = run(capsys, "eval", "--query-codes", str(codes1),
                       "--db-codes", str(codes2),
                       "--query-labels", str(synth_dir / "labels.amx"),
                       "--db-labels", str(synth_dir / "labels.amx"),
                       "--topn", "5,10")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "metric,task,bits,value"
    assert lines[1].startswith("map,i2t,8,")
    assert any(line.startswith("precision_at_5,") for line in lines)


def test_train_and_eval_at_128_bits(tmp_path, capsys):
    # multi-word codes (two 64-bit words per instance) through the full pipeline
    data = tmp_path / "data"
    assert run(capsys, "synth", "--n", "150", "--c", "3", "--seed", "1",
               "--out", str(data))[0] == 0
    model = tmp_path / "m.amh"
    code, _, _ = run(capsys, "train", "--x1", str(data / "x1.amx"),
                     "--x2", str(data / "x2.amx"), "--labels", str(data / "labels.amx"),
                     "--out", str(model), "--bits", "128", "--k1", "32", "--k2", "32",
                     "--max-iters", "3")
    assert code == 0
    codes = tmp_path / "c.abc"
    assert run(capsys, "encode", "--model", str(model), "--features",
               str(data / "x1.amx"), "--modality", "1", "--out", str(codes))[0] == 0
    code, out, _ = run(capsys, "eval", "--query-codes", str(codes),
                       "--db-codes", str(codes),
                       "--query-labels", str(data / "labels.amx"),
                       "--db-labels", str(data / "labels.amx"))
    assert code == 0
    map_line = [ln for ln in out.splitlines() if ln.startswith("map,")][0]
    assert map_line.split(",")[2] == "128"
    assert float(map_line.split(",")[3]) > 0.9


def test_encode_deterministic(synth_dir, tmp_path, capsys):
    model = tmp_path / "model.amh"
    assert run(capsys, *train_args(synth_dir, model))[0] == 0
    a, b = tmp_path / "a.abc", tmp_path / "b.abc"
    for out in (a, b):
        code, _, _ = run(capsys, "encode", "--model", str(model), "--features",
                         str(synth_dir / "x1.amx"), "--modality", "1", "--out", str(out))
        assert code == 0
    assert a.read_bytes() == b.read_bytes()


def test_encode_wrong_dimensions(synth_dir, tmp_path, capsys):
    model = tmp_path / "model.amh"
    assert run(capsys, *train_args(synth_dir, model))[0] == 0
    code, _, err = run(capsys, "encode", "--model", str(model), "--features",
                       str(synth_dir / "x2.amx"), "--modality", "1",
                       "--out", str(tmp_path / "c.abc"))
    assert code == 2
    assert "8" in err and "6" in err  # expected vs actual feature dimension


def test_eval_perfect_toy(tmp_path, capsys):
    plus = np.ones((2, 16))
    minus = -np.ones((2, 16))
    write_codes(pack_codes(np.vstack([plus, minus])), tmp_path / "db.abc")
    write_codes(pack_codes(np.vstack([plus[:1], minus[:1]])), tmp_path / "q.abc")
    write_class_labels(tmp_path / "dbl.amx", [0, 0, 1, 1], c=2)
    write_class_labels(tmp_path / "ql.amx", [0, 1], c=2)
    code, out, _ = run(capsys, "eval", "--query-codes", str(tmp_path / "q.abc"),
                       "--db-codes", str(tmp_path / "db.abc"),
                       "--query-labels", str(tmp_path / "ql.amx"),
                       "--db-labels", str(tmp_path / "dbl.amx"))
    assert code == 0
    assert "map,i2t,16,1.0" in out.splitlines()


def test_eval_mismatched_code_lengths(tmp_path, capsys):
    write_codes(pack_codes(np.ones((2, 8))), tmp_path / "q.abc")
    write_codes(pack_codes(np.ones((2, 16))), tmp_path / "db.abc")
    write_class_labels(tmp_path / "l.amx", [0, 0], c=1)
    code, _, err = run(capsys, "eval", "--query-codes", str(tmp_path / "q.abc"),
                       "--db-codes", str(tmp_path / "db.abc"),
                       "--query-labels", str(tmp_path / "l.amx"),
                       "--db-labels", str(tmp_path / "l.amx"))
    assert code == 2
    assert "8" in err and "16" in err


def test_bench_tiny_sizes(capsys):
    code, out, _ = run(capsys, "bench", "--sizes", "40,80", "--bits", "8",
                       "--c", "3", "--k1", "16", "--k2", "16", "--sweeps", "2")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "n,bits,seconds"
    assert lines[1].startswith("40,8,") and lines[2].startswith("80,8,")
    assert lines[3].startswith("slope,8,")


def test_train_degenerate_data_is_exit_3(tmp_path, capsys):
    # identical rows make every point coincide with every anchor (width 0)
    flat = np.ones((20, 4))
    dataio.write_matrix(flat, tmp_path / "x1.amx")
    dataio.write_matrix(flat[:, :3], tmp_path / "x2.amx")
    write_class_labels(tmp_path / "labels.amx", [i % 2 for i in range(20)], c=2)
    code, _, err = run(capsys, "train", "--x1", str(tmp_path / "x1.amx"),
                       "--x2", str(tmp_path / "x2.amx"),
                       "--labels", str(tmp_path / "labels.amx"),
                       "--out", str(tmp_path / "m.amh"),
                       "--bits", "4", "--k1", "8", "--k2", "8")
    assert code == 3
    assert "width" in err


def test_config_file_and_flag_precedence(tmp_path, capsys):
    config = tmp_path / "run.cfg"
    config.write_text("n=30\nc=3\nseed=9\n")
    out_dir = tmp_path / "out"
    code, _, _ = run(capsys, "synth", "--config", str(config), "--c", "4",
                     "--out", str(out_dir))
    assert code == 0
    labels = dataio.read_labels(out_dir / "labels.amx")
    assert labels.c == 4      # flag beats the config file
    assert labels.n == 30     # config beats the default


def test_config_unknown_key_rejected(tmp_path, capsys):
    config = tmp_path / "run.cfg"
    config.write_text("bogus=1\n")
    code, _, err = run(capsys, "synth", "--config", str(config),
                       "--out", str(tmp_path / "o"))
    assert code == 2
    assert "bogus" in err


def test_help_lists_defaults():
    parser = build_parser()
    for command, flags in (("train", ["--omega", "--k1", "--k2", "--lambda-h",
                                      "--max-iters", "--tol", "--bits"]),
                           ("synth", ["--noise", "--seed"])):
        sub = parser._subparsers._group_actions[0].choices[command]
        text = sub.format_help()
        for flag in flags:
            assert flag in text
    train_help = parser._subparsers._group_actions[0].choices["train"].format_help()
    assert "default: 0.5" in train_help       # omega
    assert "default: 500" in train_help       # k1
    assert "default: 1000" in train_help      # k2
    assert "default: 30" in train_help        # max-iters
