import json
import sys
from pathlib import Path

import pytest
from click.testing import CliRunner

from masekit.cli import main

STUB = Path(__file__).parent / "stub_server.py"


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, args, **kwargs):
    result = runner.invoke(main, args, catch_exceptions=False, **kwargs)
    assert result.exit_code == 0, result.output
    return result


@pytest.fixture
def workspace(runner, tmp_path):
    invoke(runner, [
        "gen-data", "--vocab", "20", "--dim", "8", "--length", "5",
        "--count", "24", "--seed", "3", "--out", str(tmp_path),
    ])
    invoke(runner, [
        "train-probe", "--table", str(tmp_path / "table.tsv"),
        "--data", str(tmp_path / "instances.txt"),
        "--epochs", "300", "--rate", "2.0", "--out", str(tmp_path / "probe.model"),
    ])
    return tmp_path


def test_gen_data_writes_files(runner, tmp_path):
    result = invoke(runner, [
        "gen-data", "--vocab", "15", "--dim", "4", "--length", "3",
        "--count", "10", "--out", str(tmp_path),
    ])
    assert (tmp_path / "table.tsv").exists()
    assert (tmp_path / "instances.txt").exists()
    assert "positive instances" in result.output


def test_explain_to_files(runner, workspace):
    out_csv = workspace / "saliency.csv"
    out_html = workspace / "heatmap.html"
    invoke(runner, [
        "explain", "--model", str(workspace / "probe.model"),
        "--table", str(workspace / "table.tsv"),
        "--data", str(workspace / "instances.txt"), "--index", "0",
        "--samples", "100", "--seed", "5",
        "--out", str(out_csv), "--html-out", str(out_html),
    ])
    assert "token_index,token_id,score" in out_csv.read_text()
    assert out_html.read_text().startswith('<div class="saliency-heatmap"')


def test_explain_with_inline_tokens_to_stdout(runner, workspace):
    result = invoke(runner, [
        "explain", "--model", str(workspace / "probe.model"),
        "--table", str(workspace / "table.tsv"),
        "--tokens", "1,2,3", "--samples", "50",
    ])
    assert result.output.count("\n") >= 4
    assert "# method = mase-ols" in result.output


def test_explain_sparse_flag(runner, workspace):
    result = invoke(runner, [
        "explain", "--model", str(workspace / "probe.model"),
        "--table", str(workspace / "table.tsv"),
        "--tokens", "1,2,3", "--samples", "50", "--sparse-L", "100.0",
    ])
    assert "# method = mase-sparse" in result.output


def test_evaluate_csv(runner, workspace):
    out = workspace / "eval.csv"
    invoke(runner, [
        "evaluate", "--model", str(workspace / "probe.model"),
        "--table", str(workspace / "table.tsv"),
        "--data", str(workspace / "instances.txt"),
        "--explainer", "occlusion", "--k", "1,2",
        "--samples", "50", "--infidelity-samples", "10",
        "--out", str(out),
    ])
    lines = out.read_text().splitlines()
    assert lines[0] == "k,CC,CC_after,delta,infidelity_mean,infidelity_se"
    assert len(lines) == 3


BENCH_CONFIG = """
[corpus]
vocab_size = 20
dim = 16
length = 6
instances = 12
rule = planted-keyword

[probe]
epochs = 100
rate = 2.0

[perturbation]
samples = 50

[evaluation]
k = 1,2
seeds = 0,1
infidelity_samples = 0

[explainers]
names = mase,random

[output]
path = report.csv
"""


def test_benchmark_runs_and_is_deterministic(runner, tmp_path):
    config_path = tmp_path / "bench.ini"
    config_path.write_text(BENCH_CONFIG, encoding="utf-8")
    invoke(runner, ["benchmark", "--config", str(config_path),
                    "--out", str(tmp_path / "run1.csv")])
    invoke(runner, ["benchmark", "--config", str(config_path),
                    "--out", str(tmp_path / "run2.csv")])
    assert (tmp_path / "run1.csv").read_bytes() == (tmp_path / "run2.csv").read_bytes()
    assert (tmp_path / "run1.txt").exists()
    meta = json.loads((tmp_path / "run1.csv.meta.json").read_text())
    assert meta["rows"] == 8


def test_benchmark_with_file_mode_attachments(runner, workspace):
    config_path = workspace / "bench.ini"
    config_path.write_text(
        """
[model]
file = probe.model

[data]
table = table.tsv
instances = instances.txt

[perturbation]
samples = 50

[evaluation]
k = 1
seeds = 0
infidelity_samples = 0

[explainers]
names = occlusion
""",
        encoding="utf-8",
    )
    invoke(runner, ["benchmark", "--config", str(config_path)])
    report = (workspace / "report.csv").read_text()
    assert len(report.splitlines()) == 2


def test_bridge_check_command(runner, workspace):
    result = invoke(runner, [
        "bridge-check",
        "--command", f"{sys.executable} {STUB} {workspace / 'probe.model'}",
        "--dim", "8",
        "--model", str(workspace / "probe.model"),
        "--timeout", "20",
    ])
    assert "zero protocol violations" in result.output
    assert "[ok  ] matches-reference" in result.output


def test_bridge_check_requires_one_transport(runner):
    result = runner.invoke(main, ["bridge-check", "--dim", "4"])
    assert result.exit_code != 0


def test_missing_input_fails_cleanly(runner, tmp_path):
    result = runner.invoke(main, [
        "explain", "--model", str(tmp_path / "nope.model"),
        "--table", str(tmp_path / "nope.tsv"), "--tokens", "1",
    ])
    assert result.exit_code != 0
