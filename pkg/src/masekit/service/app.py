"""FastAPI service wrapping the toolkit.

The service is stateless: models, tables, and datasets travel inside the
requests as the same text formats the files use, so any number of clients
can share one long-running instance.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..bridge import bridge_check, open_transport
from ..configfile import parse_config
from ..corpus import (
    CorpusBundle,
    SyntheticCorpusSpec,
    generate_corpus,
    instances_to_text,
    parse_instances,
    train_linear_probe,
)
from ..embeddings import EmbeddingTable, TokenSequence, embed
from ..errors import MasekitError
from ..estimators import SparseSpec, explain
from ..experiment import run_experiment
from ..models import model_to_text, parse_model
from ..perturbation import PerturbationSpec
from ..saliency_io import saliency_to_csv, saliency_to_html
from . import schemas


def create_app() -> FastAPI:
    app = FastAPI(
        title="masekit service",
        description="Perturbation-based saliency estimation for embedding classifiers",
        version=__version__,
    )

    @app.exception_handler(MasekitError)
    async def masekit_error_handler(request, exc: MasekitError):  # noqa: ARG001
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/corpus/generate", response_model=schemas.CorpusResponse)
    def corpus_generate(request: schemas.CorpusRequest):
        spec = SyntheticCorpusSpec(
            vocab_size=request.vocab_size,
            embedding_dim=request.embedding_dim,
            sequence_length=request.sequence_length,
            instances=request.instances,
            label_rule=request.label_rule,
            planted_keywords=request.planted_keywords,
            seed=request.seed,
        )
        bundle = generate_corpus(spec)
        return schemas.CorpusResponse(
            table=bundle.table.to_text(),
            instances=instances_to_text(bundle.instances),
            positives=sum(label for _, label in bundle.instances),
            planted_tokens=list(bundle.planted_tokens),
        )

    @app.post("/probe/train", response_model=schemas.TrainProbeResponse)
    def probe_train(request: schemas.TrainProbeRequest):
        table = EmbeddingTable.parse(request.table)
        instances = parse_instances(request.instances)
        bundle = CorpusBundle(table=table, instances=instances)
        probe = train_linear_probe(
            bundle, epochs=request.epochs, learning_rate=request.learning_rate, seed=request.seed
        )
        return schemas.TrainProbeResponse(
            model=model_to_text(probe.model), train_accuracy=probe.train_accuracy
        )

    @app.post("/explain", response_model=schemas.ExplainResponse)
    def explain_endpoint(request: schemas.ExplainRequest):
        model = parse_model(request.model)
        token_ids: list[int] | None = None
        if request.matrix is not None:
            matrix = np.asarray(request.matrix, dtype=np.float64)
        elif request.tokens is not None:
            if request.table is None:
                raise HTTPException(422, "token input requires an embedding table")
            table = EmbeddingTable.parse(request.table)
            seq = TokenSequence(tuple(request.tokens))
            matrix = embed(table, seq)
            token_ids = list(seq.tokens)
        else:
            raise HTTPException(422, "provide either tokens+table or an explicit matrix")
        spec = PerturbationSpec(
            sigma=request.sigma,
            samples=request.samples,
            seed=request.seed,
            style=request.style,
        )
        sparse = None
        estimator = request.estimator
        if request.sparse_l is not None:
            sparse = SparseSpec(budget=request.sparse_l)
            estimator = "sparse"
        saliency = explain(model, matrix, spec, sparse=sparse, estimator=estimator)
        labels = None if token_ids is None else [f"t{t}" for t in token_ids]
        return schemas.ExplainResponse(
            scores=[float(v) for v in saliency.scores],
            method=saliency.method,
            base_score=saliency.base_score,
            warnings=list(saliency.warnings),
            csv=saliency_to_csv(saliency, token_ids),
            html=saliency_to_html(saliency, labels),
        )

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate_endpoint(request: schemas.EvaluateRequest):
        config_lines = [
            "[model]", "file = model.txt",
            "[data]", "table = table.tsv", "instances = data.txt",
            "[perturbation]", f"sigma = {request.sigma}", f"samples = {request.samples}",
            "[evaluation]",
            f"k = {','.join(str(k) for k in request.k)}",
            f"seeds = {request.seed}",
            f"infidelity_samples = {request.infidelity_samples}",
            "[explainers]", f"names = {request.explainer}",
        ]
        if request.explainer_params:
            config_lines.append(f"[explainer.{request.explainer}]")
            for key, value in sorted(request.explainer_params.items()):
                config_lines.append(f"{key} = {value}")
        with tempfile.TemporaryDirectory() as workdir:
            base = Path(workdir)
            (base / "model.txt").write_text(request.model, encoding="utf-8")
            (base / "table.tsv").write_text(request.table, encoding="utf-8")
            (base / "data.txt").write_text(request.instances, encoding="utf-8")
            config = parse_config("\n".join(config_lines) + "\n", base_dir=base)
            report = run_experiment(config)
        return schemas.EvaluateResponse(
            rows=[
                schemas.EvaluateRow(
                    k=row.k,
                    correct=row.correct,
                    correct_after=row.correct_after,
                    delta=row.delta,
                    infidelity_mean=row.infidelity_mean,
                    infidelity_se=row.infidelity_se,
                )
                for row in report.rows
            ]
        )

    @app.post("/benchmark", response_model=schemas.BenchmarkResponse)
    def benchmark_endpoint(request: schemas.BenchmarkRequest):
        with tempfile.TemporaryDirectory() as workdir:
            base = Path(workdir)
            for name, content in request.files.items():
                target = (base / name).resolve()
                if not str(target).startswith(str(base.resolve())):
                    raise HTTPException(422, f"attachment path escapes the workspace: {name}")
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_text(content, encoding="utf-8")
            config = parse_config(request.config, base_dir=base)
            report = run_experiment(config, out_path=base / "report.csv")
            return schemas.BenchmarkResponse(
                report_csv=(base / "report.csv").read_text(encoding="utf-8"),
                table=(base / "report.txt").read_text(encoding="utf-8"),
                meta=report.meta,
            )

    @app.post("/bridge/check", response_model=schemas.BridgeCheckResponse)
    def bridge_check_endpoint(request: schemas.BridgeCheckRequest):
        reference = None
        if request.reference_model:
            reference = parse_model(request.reference_model)
        transport = open_transport(request.command, request.tcp)
        report = bridge_check(
            transport,
            dim=request.dim,
            reference=reference,
            timeout=request.timeout,
            seed=request.seed,
        )
        return schemas.BridgeCheckResponse(
            passed=report.passed,
            violations=report.violations,
            checks=[
                schemas.CheckItem(name=name, passed=ok, detail=detail)
                for name, ok, detail in report.checks
            ],
        )

    return app


app = create_app()
