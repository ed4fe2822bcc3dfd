"""Benchmark orchestration: run explainers over a grid of (k, seed) cells.

One cell is (explainer, seed): saliency is computed once per correctly
classified instance and reused across all masking sizes k, matching a
protocol that fixes the instance set per seed.  Completed cells are
checkpointed so an aborted run (for example a dropped bridge connection)
resumes without re-evaluating.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (
    KernelSpec,
    grad_l2_explain,
    kernel_shap_explain,
    lime_explain,
    occlusion_explain,
    permutation_importance,
    random_explain,
)
from .bridge import BridgeClient, BridgedModel, open_transport
from .configfile import ExplainerConfig, RawConfig
from .corpus import (
    CorpusBundle,
    SyntheticCorpusSpec,
    generate_corpus,
    load_instances,
    train_linear_probe,
)
from .embeddings import EmbeddingTable, TokenSequence, embed
from .errors import BridgeError, ConfigError, PipelineError
from .estimators import SparseSpec, explain
from .metrics import MaskingScheme, infidelity, mask_top_k
from .perturbation import PerturbationSpec
from .models import BlackBoxModel, load_model
from .rng import derive_seed


@dataclass(frozen=True)
class ReportRow:
    model: str
    dataset: str
    explainer: str
    k: int
    seed: int
    correct: int
    correct_after: int
    delta: float | None
    infidelity_mean: float | None
    infidelity_se: float | None


@dataclass
class ExperimentReport:
    rows: list[ReportRow]
    config_hash: str
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["model,dataset,explainer,k,seed,CC,CC_after,delta,infidelity_mean,infidelity_se"]
        for row in self.rows:
            delta = "" if row.delta is None else repr(row.delta)
            inf_mean = "" if row.infidelity_mean is None else repr(row.infidelity_mean)
            inf_se = "" if row.infidelity_se is None else repr(row.infidelity_se)
            lines.append(
                f"{row.model},{row.dataset},{row.explainer},{row.k},{row.seed},"
                f"{row.correct},{row.correct_after},{delta},{inf_mean},{inf_se}"
            )
        return "\n".join(lines) + "\n"

    def render_table(self) -> str:
        """Plain-text mean +/- std table across seeds, one row per explainer."""
        k_values = sorted({row.k for row in self.rows})
        explainers = []
        for row in self.rows:
            if row.explainer not in explainers:
                explainers.append(row.explainer)
        header = ["explainer"] + [f"Top-{k}" for k in k_values] + ["infidelity"]
        table = [header]
        for name in explainers:
            cells = [name]
            for k in k_values:
                deltas = [
                    row.delta
                    for row in self.rows
                    if row.explainer == name and row.k == k and row.delta is not None
                ]
                if deltas:
                    cells.append(f"{np.mean(deltas):.3f}±{np.std(deltas):.3f}")
                else:
                    cells.append("undefined")
            infs = [
                row.infidelity_mean
                for row in self.rows
                if row.explainer == name and row.infidelity_mean is not None
            ]
            cells.append(f"{np.mean(infs):.3e}" if infs else "-")
            table.append(cells)
        widths = [max(len(r[i]) for r in table) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
        return "\n".join(lines) + "\n"


def config_hash(config: RawConfig) -> str:
    digest = hashlib.sha256()
    digest.update(config.text.encode())
    for name in sorted(
        [config.model.get("file", "")] +
        [config.data.get(k, "") for k in ("table", "instances")]
    ):
        if not name:
            continue
        path = config.base_dir / name
        if path.exists():
            digest.update(path.read_bytes())
    return digest.hexdigest()[:16]


@dataclass
class _SeedContext:
    model: BlackBoxModel
    table: EmbeddingTable
    instances: list[tuple[TokenSequence, int]]
    model_name: str
    dataset_name: str


class _Resolver:
    """Fail-fast resolution of every component referenced by the config."""

    def __init__(self, config: RawConfig):
        self.config = config
        self.synthetic = bool(config.corpus)
        self._fixed: _SeedContext | None = None
        self._bridge_client: BridgeClient | None = None
        if self.synthetic:
            corpus = config.corpus
            required = {"vocab_size", "dim", "length", "instances"}
            missing = required - corpus.keys()
            if missing:
                raise ConfigError(f"[corpus] is missing keys: {', '.join(sorted(missing))}")
            # Validate the spec once with the first seed; per-seed specs only
            # change the seed field.
            self._corpus_spec_for(config.evaluation["seeds"][0])
            if not {"epochs", "rate"} <= config.probe.keys():
                raise ConfigError("[probe] needs epochs and rate")
            self.sequence_length = corpus["length"]
        else:
            table_path = config.base_dir / config.data["table"]
            instances_path = config.base_dir / config.data["instances"]
            if not table_path.exists():
                raise ConfigError(f"embedding table not found: {table_path}")
            if not instances_path.exists():
                raise ConfigError(f"instances file not found: {instances_path}")
            table = EmbeddingTable.load(table_path)
            instances = load_instances(instances_path)
            self.sequence_length = len(instances[0][0])
            model, model_name = self._resolve_model(table.dimension)
            self._fixed = _SeedContext(
                model=model,
                table=table,
                instances=instances,
                model_name=model_name,
                dataset_name=f"file:{Path(config.data['instances']).name}",
            )
        for k in config.evaluation["k"]:
            if k > self.sequence_length:
                raise ConfigError(
                    f"k = {k} exceeds the sequence length {self.sequence_length}"
                )

    def _resolve_model(self, dim: int) -> tuple[BlackBoxModel, str]:
        model_cfg = self.config.model
        if model_cfg.get("kind", "file") == "file":
            path = self.config.base_dir / model_cfg["file"]
            if not path.exists():
                raise ConfigError(f"model file not found: {path}")
            model = load_model(path)
            if model.embedding_dimension != dim:
                raise ConfigError(
                    f"model dimension {model.embedding_dimension} != table dimension {dim}"
                )
            return model, f"file:{Path(model_cfg['file']).name}"
        declared = model_cfg["dim"]
        if declared != dim:
            raise ConfigError(f"bridge dim {declared} != table dimension {dim}")
        transport = open_transport(model_cfg.get("command"), model_cfg.get("tcp"))
        self._bridge_client = BridgeClient(transport)
        return BridgedModel(self._bridge_client, declared), "bridge"

    def _corpus_spec_for(self, seed: int) -> SyntheticCorpusSpec:
        corpus = self.config.corpus
        return SyntheticCorpusSpec(
            vocab_size=corpus["vocab_size"],
            embedding_dim=corpus["dim"],
            sequence_length=corpus["length"],
            instances=corpus["instances"],
            label_rule=corpus.get("rule", "planted-keyword"),
            planted_keywords=corpus.get("planted", 1),
            seed=seed,
        )

    def context_for(self, seed: int) -> _SeedContext:
        if self._fixed is not None:
            return self._fixed
        bundle: CorpusBundle = generate_corpus(self._corpus_spec_for(seed))
        probe = train_linear_probe(
            bundle,
            epochs=self.config.probe["epochs"],
            learning_rate=self.config.probe["rate"],
            seed=seed,
        )
        rule = bundle.spec.label_rule
        return _SeedContext(
            model=probe.model,
            table=bundle.table,
            instances=bundle.instances,
            model_name="probe",
            dataset_name=f"corpus:{rule}",
        )

    def close(self) -> None:
        if self._bridge_client is not None:
            self._bridge_client.close()


def _perturbation_spec(config: RawConfig, seed: int, samples_override: int | None = None):
    section = config.perturbation
    return PerturbationSpec(
        sigma=section.get("sigma", 0.1),
        samples=samples_override or section.get("samples", 1000),
        seed=seed,
        style=section.get("style", "normalized-additive"),
    )


def _make_explainer(spec: ExplainerConfig, config: RawConfig, run_seed: int, context: _SeedContext):
    """Returns fn(model, matrix, instance_index) -> Saliency."""
    params = spec.params
    method = spec.method

    if method == "mase":
        estimator = params.get("estimator", "ols")
        sparse = None
        if estimator == "sparse" or "sparse_l" in params:
            estimator = "sparse"
            sparse = SparseSpec(budget=params.get("sparse_l", 0.0))

        def run(model, matrix, index):
            pspec = _perturbation_spec(
                config, derive_seed(run_seed, spec.name, index), params.get("samples")
            )
            return explain(model, matrix, pspec, sparse=sparse, estimator=estimator)

    elif method == "random":
        def run(model, matrix, index):
            return random_explain(matrix.shape[0], derive_seed(run_seed, spec.name, index))

    elif method == "lime":
        kernel = KernelSpec(width=params.get("width", 0.25), penalty=params.get("penalty", 0.0))

        def run(model, matrix, index):
            return lime_explain(
                model,
                matrix,
                samples=params.get("samples", 1000),
                kernel=kernel,
                seed=derive_seed(run_seed, spec.name, index),
            )

    elif method == "kernel-shap":
        def run(model, matrix, index):
            return kernel_shap_explain(
                model,
                matrix,
                samples=params.get("samples", 512),
                seed=derive_seed(run_seed, spec.name, index),
            )

    elif method == "permutation":
        pool_size = params.get("background", 8)
        pool = [
            embed(context.table, seq)
            for seq, _ in context.instances[:pool_size]
        ]

        def run(model, matrix, index):
            return permutation_importance(
                model,
                matrix,
                background=pool,
                repeats=params.get("repeats", 10),
                seed=derive_seed(run_seed, spec.name, index),
            )

    elif method == "grad-l2":
        def run(model, matrix, index):
            return grad_l2_explain(model, matrix)

    elif method == "occlusion":
        def run(model, matrix, index):
            return occlusion_explain(model, matrix)

    else:  # pragma: no cover - names validated at parse time
        raise ConfigError(f"unknown explainer method {method!r}")

    return run


def _predicted(value: float) -> int:
    return 1 if value >= 0.5 else 0


def _evaluate_cell(
    context: _SeedContext,
    explainer_cfg: ExplainerConfig,
    config: RawConfig,
    seed: int,
) -> dict:
    """All k values for one (explainer, seed) cell."""
    model = context.model
    run = _make_explainer(explainer_cfg, config, seed, context)
    k_values = config.evaluation["k"]
    inf_samples = config.evaluation["infidelity_samples"]
    workers = config.evaluation["workers"]

    def handle(index_and_instance):
        index, (seq, label) = index_and_instance
        matrix = embed(context.table, seq)
        prediction = _predicted(model.evaluate(matrix).value)
        if prediction != label:
            return None
        try:
            saliency = run(model, matrix, index)
        except Exception as exc:  # noqa: BLE001
            raise PipelineError(f"instance {index}", exc) from exc
        ranking = saliency.scores if prediction == 1 else -saliency.scores
        flips = {}
        for k in k_values:
            masked = mask_top_k(matrix, ranking, MaskingScheme(k=k))
            flips[k] = _predicted(model.evaluate(masked).value) != label
        inf_value = None
        if inf_samples > 0:
            pspec = _perturbation_spec(
                config, derive_seed(seed, "infidelity", index), inf_samples
            )
            inf_value = infidelity(saliency.scores, model, matrix, pspec).value
        return flips, inf_value

    items = list(enumerate(context.instances))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(handle, items))
    else:
        outcomes = [handle(item) for item in items]

    kept = [o for o in outcomes if o is not None]
    correct = len(kept)
    flipped = {k: sum(1 for flips, _ in kept if flips[k]) for k in k_values}
    inf_values = [v for _, v in kept if v is not None]
    return {
        "correct": correct,
        "flipped": flipped,
        "infidelity_mean": float(np.mean(inf_values)) if inf_values else None,
        "infidelity_se": (
            float(np.std(inf_values, ddof=1) / np.sqrt(len(inf_values)))
            if len(inf_values) > 1
            else None
        ),
    }


def _rows_from_cell(
    cell: dict, context_names: tuple[str, str], explainer: str, seed: int, config: RawConfig
) -> list[ReportRow]:
    model_name, dataset_name = context_names
    rows = []
    literal = config.evaluation["literal_delta"]
    for k in config.evaluation["k"]:
        correct = cell["correct"]
        # Checkpointed cells come back from JSON with string keys.
        flips = cell["flipped"]
        flipped = flips[k] if k in flips else flips[str(k)]
        after = correct - flipped
        if correct == 0:
            delta = None
        elif literal:
            delta = after / correct
        else:
            delta = (correct - after) / correct
        rows.append(
            ReportRow(
                model=model_name,
                dataset=dataset_name,
                explainer=explainer,
                k=k,
                seed=seed,
                correct=correct,
                correct_after=after,
                delta=delta,
                infidelity_mean=cell["infidelity_mean"],
                infidelity_se=cell["infidelity_se"],
            )
        )
    return rows


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def run_experiment(config: RawConfig, out_path: str | Path | None = None) -> ExperimentReport:
    """Run the full grid; writes report files atomically when a path is given.

    Alongside ``<out>`` the run writes ``<out>.txt`` (rendered table) and
    ``<out>.meta.json`` (run metadata).  A ``<out>.cells.jsonl`` checkpoint
    accumulates finished (explainer, seed) cells and is consumed on resume,
    then removed after a complete run.
    """
    started = time.time()
    resolver = _Resolver(config)
    digest = config_hash(config)

    checkpoint_path = None
    completed: dict[tuple[str, int], dict] = {}
    if out_path is not None:
        out_path = Path(out_path)
        checkpoint_path = out_path.with_name(out_path.name + ".cells.jsonl")
        if checkpoint_path.exists():
            for line in checkpoint_path.read_text(encoding="utf-8").splitlines():
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    continue
                if entry.get("hash") == digest:
                    completed[(entry["explainer"], entry["seed"])] = entry["cell"]

    rows: list[ReportRow] = []
    reused = 0
    try:
        for seed in config.evaluation["seeds"]:
            context = resolver.context_for(seed)
            names = (context.model_name, context.dataset_name)
            for explainer_cfg in config.explainers:
                key = (explainer_cfg.name, seed)
                if key in completed:
                    cell = completed[key]
                    reused += 1
                else:
                    try:
                        cell = _evaluate_cell(context, explainer_cfg, config, seed)
                    except BridgeError as exc:
                        raise BridgeError(
                            f"{exc} (completed cells are checkpointed; rerun to resume)"
                        ) from exc
                    if checkpoint_path is not None:
                        entry = {
                            "hash": digest,
                            "explainer": explainer_cfg.name,
                            "seed": seed,
                            "cell": cell,
                        }
                        with checkpoint_path.open("a", encoding="utf-8") as fh:
                            fh.write(json.dumps(entry) + "\n")
                rows.extend(_rows_from_cell(cell, names, explainer_cfg.name, seed, config))
    finally:
        resolver.close()

    report = ExperimentReport(
        rows=rows,
        config_hash=digest,
        meta={
            "config_hash": digest,
            "version": __version__,
            "wall_time_s": round(time.time() - started, 3),
            "rows": len(rows),
            "cells_reused": reused,
        },
    )
    if out_path is not None:
        _atomic_write(out_path, report.to_csv())
        _atomic_write(out_path.with_name(out_path.stem + ".txt"), report.render_table())
        _atomic_write(
            out_path.with_name(out_path.name + ".meta.json"),
            json.dumps(report.meta, indent=2, sort_keys=True) + "\n",
        )
        if checkpoint_path is not None and checkpoint_path.exists():
            checkpoint_path.unlink()
    return report
