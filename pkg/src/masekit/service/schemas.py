"""Pydantic request/response models for the explanation service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class CorpusRequest(BaseModel):
    vocab_size: int = Field(ge=1)
    embedding_dim: int = Field(ge=1)
    sequence_length: int = Field(ge=1)
    instances: int = Field(ge=1)
    label_rule: Literal["planted-keyword", "linear-teacher"] = "planted-keyword"
    planted_keywords: int = 1
    seed: int = 0


class CorpusResponse(BaseModel):
    table: str
    instances: str
    positives: int
    planted_tokens: list[int]


class TrainProbeRequest(BaseModel):
    table: str
    instances: str
    epochs: int = Field(default=500, ge=0)
    learning_rate: float = Field(default=5.0, ge=0.0)
    seed: int = 0


class TrainProbeResponse(BaseModel):
    model: str
    train_accuracy: float


class ExplainRequest(BaseModel):
    model: str
    table: Optional[str] = None
    tokens: Optional[list[int]] = None
    matrix: Optional[list[list[float]]] = None
    sigma: float = 0.1
    samples: int = Field(default=1000, ge=1)
    seed: int = 0
    style: Literal["normalized-additive", "pure-scaling"] = "normalized-additive"
    estimator: Optional[Literal["ols", "closed-form", "sparse"]] = None
    sparse_l: Optional[float] = None


class ExplainResponse(BaseModel):
    scores: list[float]
    method: str
    base_score: float
    warnings: list[str]
    csv: str
    html: str


class EvaluateRequest(BaseModel):
    model: str
    table: str
    instances: str
    explainer: str = "mase"
    explainer_params: dict = Field(default_factory=dict)
    k: list[int] = Field(default_factory=lambda: [1])
    seed: int = 0
    sigma: float = 0.1
    samples: int = Field(default=1000, ge=1)
    infidelity_samples: int = Field(default=200, ge=0)


class EvaluateRow(BaseModel):
    k: int
    correct: int
    correct_after: int
    delta: Optional[float]
    infidelity_mean: Optional[float]
    infidelity_se: Optional[float]


class EvaluateResponse(BaseModel):
    rows: list[EvaluateRow]


class BenchmarkRequest(BaseModel):
    config: str
    files: dict[str, str] = Field(default_factory=dict)


class BenchmarkResponse(BaseModel):
    report_csv: str
    table: str
    meta: dict


class BridgeCheckRequest(BaseModel):
    command: Optional[str] = None
    tcp: Optional[str] = None
    dim: int = Field(ge=1)
    reference_model: Optional[str] = None
    timeout: float = 30.0
    seed: int = 0


class CheckItem(BaseModel):
    name: str
    passed: bool
    detail: str


class BridgeCheckResponse(BaseModel):
    passed: bool
    violations: list[str]
    checks: list[CheckItem]
