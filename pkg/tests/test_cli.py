import pytest

from sigmalab import records
from sigmalab.cli import main


@pytest.fixture(autouse=True)
def out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(records.OUT_DIR_ENV, str(tmp_path))
    return tmp_path


def test_sigma(capsys, out_dir):
    assert main(["sigma", "--n", "6", "--k", "2"]) == 0
    assert "6.5957541" in capsys.readouterr().out
    (rec,) = records.read_records(out_dir / records.DEFAULT_FILE)
    assert rec["kind"] == "sigma" and rec["value"].startswith("6.5957541")


def test_kernel_oracle(capsys):
    assert main(["kernel", "--k", "3", "--nu", "2", "--y", "1", "--oracle"]) == 0
    out = capsys.readouterr().out
    assert "-0.0451610664260712" in out and "ok" in out


def test_verify(capsys, out_dir):
    assert main(["verify", "--x", "50.5", "--k", "2", "--nu", "12", "--ell", "7"]) == 0
    assert "agreement  ok" in capsys.readouterr().out
    (rec,) = records.read_records(out_dir / records.DEFAULT_FILE)
    assert rec["ok"] is True


def test_relation_deterministic(tmp_path):
    args = ["relation", "--x", "500", "--J", "10", "--nu", "4", "--ell", "7", "--block-len", "10",
            "--mu-max", "0", "--trials", "2", "--seed", "3"]
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert records.record_lines(a) == records.record_lines(b)
    recs = records.read_records(a)
    assert [r["kind"] for r in recs] == ["relation_solution"] * 2 + ["relation_summary"]
    assert all(r["identity_ok"] and r["exact_residual_zero"] for r in recs[:2])
    for line in records.record_lines(a):
        assert records.dumps(records.loads(line)) == line.rstrip("\n")


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sigma run\nk = 3\nprecision-bits = 96\n")
    assert main(["sigma", "--n", "6", "--config", str(cfg)]) == 0
    assert "sigma_3(6)" in capsys.readouterr().out
    assert main(["sigma", "--n", "6", "--config", str(cfg), "--k", "2"]) == 0
    assert "sigma_2(6)" in capsys.readouterr().out


def test_auto_ell(out_dir):
    assert main(["relation", "--x", "500", "--J", "10", "--nu", "4", "--ell", "0", "--no-blocks"]) == 0
    rec = records.read_records(out_dir / records.DEFAULT_FILE)[0]
    assert rec["params"]["chi"]["modulus"] == 19  # largest prime <= sqrt(500)


def test_recover(capsys):
    assert main(["recover", "--N", "10403"]) == 0
    assert "103 * 101" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["sigma", "--n", "6", "--k", "1"],
        ["sigma"],
        ["nonsense"],
        ["sigma", "--n", "6", "--precision-bits", "32"],
        ["relation", "--x", "500", "--J", "10", "--support-gap", "10"],
        ["relation", "--x", "500", "--J", "10", "--ell", "9"],
        ["verify", "--k", "2"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as e:
        code = e.code
    assert code == 2


def test_bad_config_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["sigma", "--n", "6", "--config", str(cfg)]) == 2


def test_computation_error_exit_1(capsys):
    assert main(["recover", "--N", "15", "--y", "51.6"]) == 1
    assert "NotFactor" in capsys.readouterr().err
    assert main(["relation", "--x", "500", "--J", "3", "--nu", "6", "--ell", "7", "--no-blocks", "--support-gap", "1"]) == 1
