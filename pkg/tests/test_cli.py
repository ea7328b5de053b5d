import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from diophlab.cli import CliConfig, emit_results, main, parse_args, selftest

CLT_FLAGS = [
    "clt",
    "--m", "2", "--n", "1",
    "--thetas", "1,1",
    "--weights", "1/2,1/2",
    "--logT", "12",
    "--samples", "4000",
    "--seed", "42",
]


def test_parse_full_clt_flags():
    cfg = parse_args(CLT_FLAGS)
    assert cfg.subcommand == "clt"
    assert cfg.m == 2 and cfg.n == 1
    assert cfg.weights == ("1/2", "1/2")
    assert cfg.logT == 12 and cfg.samples == 4000 and cfg.seed == 42
    assert cfg.problem().m == 2


def test_parse_missing_n_is_usage_error():
    argv = ["clt", "--m", "2", "--thetas", "1,1", "--weights", "1/2,1/2"]
    assert main(argv) == 2


def test_parse_bad_weights_surfaces_problem_validation():
    argv = ["clt", "--m", "2", "--n", "1", "--thetas", "1,1", "--weights", "1,1"]
    assert main(argv) == 2


def test_parse_unknown_flag_is_usage_error():
    assert main(["clt", "--nonsense", "1"]) == 2


def test_config_file_merge_and_flag_override(tmp_path):
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(
        json.dumps(
            {
                "m": 2,
                "n": 1,
                "weights": ["1/2", "1/2"],
                "thetas": [1.0, 1.0],
                "samples": 7,
                "seed": 5,
            }
        )
    )
    cfg = parse_args(["clt", "--config", str(cfg_file), "--samples", "9"])
    assert cfg.samples == 9  # flag overrides config
    assert cfg.seed == 5  # config supplies the rest


def test_cli_config_round_trip():
    cfg = parse_args(CLT_FLAGS)
    again = CliConfig.from_json(cfg.to_json())
    assert again == cfg


def test_emit_results(tmp_path):
    paths = emit_results(
        {"experiment": "demo"},
        [(0, 1, 0.5), (1, 2, -0.25)],
        ("index", "Delta", "D_T"),
        str(tmp_path / "out"),
        plot_sigma2=4.0,
    )
    csv_text = Path(paths["csv"]).read_text()
    assert csv_text.startswith("# schema_version=1\n")
    assert csv_text.splitlines()[1] == "index,Delta,D_T"
    summary = json.loads(Path(paths["summary"]).read_text())
    assert summary["experiment"] == "demo"
    plot = Path(paths["plot"]).read_text()
    assert "results.csv" in plot and "sigma2" in plot


def test_emit_results_empty(tmp_path):
    paths = emit_results({}, [], ("index", "Delta", "D_T"), str(tmp_path / "out"))
    assert json.loads(Path(paths["summary"]).read_text())["no_data"] is True
    assert len(Path(paths["csv"]).read_text().splitlines()) == 2  # comment + header


def test_count_subcommand_emits_record(tmp_path, capsys):
    code = main(
        [
            "count",
            "--m", "1", "--n", "1",
            "--weights", "1",
            "--thetas", "0.5",
            "--logT", "3",
            "--u", "0",
            "--out-dir", str(tmp_path / "count"),
        ]
    )
    assert code == 0
    record = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert record["total"] == sum(record["per_block"])
    assert record["convention"] == "both"
    # u = 0 forces p = 0, and e^3 = 20.08..: q runs over +-{1..20}
    assert record["total"] == 40


def test_rerun_same_seed_byte_identical_csv(tmp_path):
    argv = [
        "clt",
        "--m", "2", "--n", "1", "--weights", "1/2,1/2", "--thetas", "1,1",
        "--logT", "5", "--samples", "40", "--seed", "11",
    ]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(argv + ["--out-dir", str(out1)])
    main(argv + ["--out-dir", str(out2)])
    assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()


def test_cap_exceeded_exit_code(tmp_path):
    env_backup = os.environ.get("DIOPH_CAP")
    os.environ["DIOPH_CAP"] = "100"
    try:
        code = main(
            [
                "count",
                "--m", "2", "--n", "1", "--weights", "1/2,1/2", "--thetas", "1,1",
                "--logT", "9", "--u", "0.5,0.25",
                "--out-dir", str(tmp_path),
            ]
        )
    finally:
        if env_backup is None:
            os.environ.pop("DIOPH_CAP", None)
        else:
            os.environ["DIOPH_CAP"] = env_backup
    assert code == 3


def test_lln_statistical_verdict_exit_code(tmp_path):
    # the mean gap exceeds the 1.0 threshold (harmonic-sum offset), exit 1
    code = main(
        [
            "lln",
            "--m", "2", "--n", "1", "--weights", "1/2,1/2", "--thetas", "1,1",
            "--samples", "60", "--seed", "4",
            "--out-dir", str(tmp_path),
        ]
    )
    assert code == 1


def test_variance_subcommand(tmp_path, capsys):
    code = main(
        [
            "variance",
            "--m", "2", "--n", "1", "--weights", "1/2,1/2", "--thetas", "1,1",
            "--out-dir", str(tmp_path),
        ]
    )
    assert code == 0
    record = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert record["C"] == pytest.approx(8.0)
    assert record["sigma2"] == pytest.approx(2.0 * record["C"] * record["zeta_ratio"], rel=1e-12)
    assert len(record["theta_table"]) == 4


def test_selftest_fast_passes():
    code, checks = selftest(fast=True)
    assert code == 0
    names = [name for name, _, _ in checks]
    assert "sigma2-identity" in names and "oracle-equivalence" in names


def test_selftest_fault_injection_fails_named_check():
    code, checks = selftest(fast=True, inject_fault="zeta")
    assert code == 1
    failed = {name for name, ok, _ in checks if not ok}
    assert "sigma2-identity" in failed
    assert "oracle-equivalence" not in failed


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "diophlab.cli", "selftest", "--fast"],
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert proc.returncode == 0
    assert "[PASS]" in proc.stdout
