import json

import numpy as np
import pytest

from masekit.configfile import parse_config
from masekit.corpus import SyntheticCorpusSpec, generate_corpus, save_instances
from masekit.errors import ConfigError
from masekit.experiment import config_hash, run_experiment
from masekit.models import ToyLinearBagModel, save_model

SMALL_SYNTHETIC = """
[corpus]
vocab_size = 30
dim = 32
length = 8
instances = 16
rule = planted-keyword
planted = 1

[probe]
epochs = 200
rate = 2.0

[perturbation]
sigma = 0.1
samples = 100

[evaluation]
k = 1,2
seeds = 0,1
infidelity_samples = 20

[explainers]
names = mase,random,occlusion

[output]
path = out.csv
"""


def write_file_mode_fixtures(tmp_path, ignore_tokens=False):
    corpus = generate_corpus(
        SyntheticCorpusSpec(
            vocab_size=20,
            embedding_dim=8,
            sequence_length=5,
            instances=12,
            label_rule="planted-keyword",
            planted_keywords=1,
            seed=7,
        )
    )
    corpus.table.save(tmp_path / "table.tsv")
    save_instances(corpus.instances, tmp_path / "data.txt")
    weights = np.zeros(8) if ignore_tokens else 0.5 * corpus.table.row(corpus.planted_tokens[0])
    save_model(ToyLinearBagModel(weights, 0.0), tmp_path / "model.txt")
    return corpus


def test_row_count_invariant():
    cfg = parse_config(SMALL_SYNTHETIC)
    report = run_experiment(cfg)
    assert len(report.rows) == 3 * 2 * 2  # explainers * k values * seeds


def test_ignoring_model_all_deltas_zero(tmp_path):
    write_file_mode_fixtures(tmp_path, ignore_tokens=True)
    cfg = parse_config(
        """
[model]
file = model.txt

[data]
table = table.tsv
instances = data.txt

[perturbation]
samples = 50

[evaluation]
k = 1,2
seeds = 0
infidelity_samples = 0

[explainers]
names = random
""",
        base_dir=tmp_path,
    )
    report = run_experiment(cfg)
    for row in report.rows:
        assert row.delta == 0.0


def test_report_files_and_determinism(tmp_path):
    cfg = parse_config(SMALL_SYNTHETIC)
    out_a = tmp_path / "a.csv"
    out_b = tmp_path / "b.csv"
    run_experiment(cfg, out_a)
    run_experiment(cfg, out_b)
    assert out_a.read_bytes() == out_b.read_bytes()
    assert (tmp_path / "a.txt").exists()
    meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
    assert meta["rows"] == 12
    assert not (tmp_path / "a.csv.cells.jsonl").exists()  # removed on success
    header = out_a.read_text().splitlines()[0]
    assert header == "model,dataset,explainer,k,seed,CC,CC_after,delta,infidelity_mean,infidelity_se"


def test_checkpoint_reuse(tmp_path):
    cfg = parse_config(SMALL_SYNTHETIC)
    digest = config_hash(cfg)
    out = tmp_path / "resume.csv"
    sentinel = {
        "hash": digest,
        "explainer": "mase",
        "seed": 0,
        "cell": {
            "correct": 5,
            "flipped": {"1": 5, "2": 5},
            "infidelity_mean": 1.25,
            "infidelity_se": 0.5,
        },
    }
    checkpoint = tmp_path / "resume.csv.cells.jsonl"
    checkpoint.write_text(json.dumps(sentinel) + "\n", encoding="utf-8")
    report = run_experiment(cfg, out)
    reused = [r for r in report.rows if r.explainer == "mase" and r.seed == 0]
    assert all(r.delta == 1.0 and r.correct == 5 for r in reused)
    assert report.meta["cells_reused"] == 1


def test_checkpoint_with_wrong_hash_ignored(tmp_path):
    cfg = parse_config(SMALL_SYNTHETIC)
    out = tmp_path / "resume.csv"
    sentinel = {
        "hash": "deadbeef",
        "explainer": "mase",
        "seed": 0,
        "cell": {"correct": 5, "flipped": {"1": 5, "2": 5},
                 "infidelity_mean": None, "infidelity_se": None},
    }
    (tmp_path / "resume.csv.cells.jsonl").write_text(json.dumps(sentinel) + "\n")
    report = run_experiment(cfg, out)
    assert report.meta["cells_reused"] == 0


def test_workers_do_not_change_results():
    cfg1 = parse_config(SMALL_SYNTHETIC)
    cfg2 = parse_config(SMALL_SYNTHETIC.replace("infidelity_samples = 20",
                                                "infidelity_samples = 20\nworkers = 3"))
    assert run_experiment(cfg1).to_csv() == run_experiment(cfg2).to_csv()


def test_literal_delta_flag():
    cfg = parse_config(SMALL_SYNTHETIC.replace("infidelity_samples = 20",
                                               "infidelity_samples = 20\nliteral_delta = true"))
    base = parse_config(SMALL_SYNTHETIC)
    literal_rows = run_experiment(cfg).rows
    plain_rows = run_experiment(base).rows
    for lit, plain in zip(literal_rows, plain_rows):
        if plain.delta is None:
            assert lit.delta is None
        else:
            assert lit.delta == pytest.approx(1.0 - plain.delta)


def test_fail_fast_on_missing_files(tmp_path):
    cfg = parse_config(
        "[model]\nfile = nope.txt\n[data]\ntable = t.tsv\ninstances = d.txt\n",
        base_dir=tmp_path,
    )
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_fail_fast_on_oversized_k():
    cfg = parse_config(SMALL_SYNTHETIC.replace("k = 1,2", "k = 1,99"))
    with pytest.raises(ConfigError, match="exceeds the sequence length"):
        run_experiment(cfg)


def test_rendered_table_format():
    cfg = parse_config(SMALL_SYNTHETIC)
    table = run_experiment(cfg).render_table()
    lines = table.splitlines()
    assert lines[0].split()[:3] == ["explainer", "Top-1", "Top-2"]
    import re

    assert re.search(r"\d\.\d{3}±\d\.\d{3}", table)


def test_mase_sparse_explainer_runs():
    cfg = parse_config(
        SMALL_SYNTHETIC.replace("names = mase,random,occlusion", "names = sparse_mase")
        + "\n[explainer.sparse_mase]\nmethod = mase\nestimator = sparse\nsparse_l = 0.001\n"
    )
    report = run_experiment(cfg)
    assert {row.explainer for row in report.rows} == {"sparse_mase"}


def test_word_level_explainers_run_side_by_side():
    cfg = parse_config(
        SMALL_SYNTHETIC.replace(
            "names = mase,random,occlusion", "names = mase,lime,permutation"
        )
        + "\n[explainer.lime]\nsamples = 64\n\n[explainer.permutation]\nrepeats = 3\nbackground = 4\n"
    )
    report = run_experiment(cfg)
    explainers = {row.explainer for row in report.rows}
    assert explainers == {"mase", "lime", "permutation"}
    # Same instances and seeds: every explainer reports the same CC per seed.
    for seed in (0, 1):
        ccs = {row.correct for row in report.rows if row.seed == seed}
        assert len(ccs) == 1
