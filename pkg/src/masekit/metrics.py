"""Explanation quality metrics: infidelity, integrated gradients, delta accuracy.

Infidelity measures the expected squared gap between an explanation's linear
prediction of the output change and the actual change under perturbation,
``E[(z . gamma - (f(E) - f(E (-) z)))^2]``, where ``E (-) z`` applies the
offsets in the opposite direction.  Because the offset distribution is
symmetric, the least-squares estimator fitted on the same draws is its exact
empirical minimizer; :func:`infidelity_inputs` exposes those draws so tests
and benchmarks can share them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .embeddings import EmbeddingTable, TokenSequence, as_embedding_matrix, embed
from .errors import (
    EmptyBatchError,
    ParameterError,
    PipelineError,
    ShapeError,
    UnsupportedLabelsError,
)
from .estimators import RegressionInputs, Saliency
from .models import BlackBoxModel
from .perturbation import PerturbationSpec, apply_offsets, sample_nlgp


@dataclass(frozen=True)
class InfidelityEstimate:
    value: float
    sample_count: int
    standard_error: float
    description: str = ""

    def __post_init__(self):
        if self.value < 0.0 or not np.isfinite(self.value):
            raise ParameterError("infidelity must be finite and non-negative")


@dataclass(frozen=True)
class MaskingScheme:
    """Mask the k highest-scoring tokens, ties broken by lowest index."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError("k must be at least 1")


@dataclass(frozen=True)
class DeltaAccuracyResult:
    correct: int
    correct_after_masking: int

    def __post_init__(self):
        if not (0 <= self.correct_after_masking <= self.correct):
            raise ParameterError("flipped count out of range")

    @property
    def delta(self) -> float | None:
        """Fraction of originally-correct inputs flipped; None when undefined."""
        if self.correct == 0:
            return None
        return (self.correct - self.correct_after_masking) / self.correct

    @property
    def literal_delta(self) -> float | None:
        """The literal |CC - MC| / CC reading, kept for comparison only."""
        if self.correct == 0:
            return None
        misclassified = self.correct - self.correct_after_masking
        return abs(self.correct - misclassified) / self.correct


def infidelity_inputs(
    model: BlackBoxModel,
    matrix: np.ndarray,
    spec: PerturbationSpec,
    samples: int | None = None,
) -> RegressionInputs:
    """Offsets and opposite-direction responses for the infidelity estimate.

    The responses are ``f(E) - f(E with offsets -z applied)``; feeding these
    inputs to ``mase_ols`` yields the explanation with minimal empirical
    infidelity on exactly this batch.
    """
    matrix = as_embedding_matrix(matrix)
    if samples is None:
        samples = spec.samples
    if samples < 1:
        raise EmptyBatchError("infidelity needs at least one perturbation sample")
    draw_spec = spec if samples == spec.samples else PerturbationSpec(
        sigma=spec.sigma,
        samples=samples,
        seed=spec.seed,
        style=spec.style,
        covariance=spec.covariance,
    )
    batch = sample_nlgp(matrix, draw_spec)
    base = model.evaluate(matrix).value
    mirrored = [apply_offsets(matrix, -z, spec.style) for z in batch.offsets]
    values = [s.value for s in model.batch_evaluate(mirrored)]
    responses = base - np.array(values)
    return RegressionInputs(
        offsets=batch.offsets,
        responses=responses,
        covariance=draw_spec.covariance_matrix(matrix.shape[0]),
    )


def empirical_infidelity(scores: np.ndarray | Saliency, inputs: RegressionInputs) -> InfidelityEstimate:
    """Mean squared surrogate gap of ``scores`` over a fixed batch."""
    gamma = scores.scores if isinstance(scores, Saliency) else np.asarray(scores, float)
    if gamma.shape != (inputs.token_count,):
        raise ShapeError("score length must equal the token count")
    gaps = (inputs.offsets @ gamma - inputs.responses) ** 2
    n = gaps.size
    stderr = float(gaps.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return InfidelityEstimate(
        value=float(gaps.mean()),
        sample_count=n,
        standard_error=stderr,
        description="empirical squared surrogate gap on a fixed perturbation batch",
    )


def infidelity(
    scores: np.ndarray | Saliency,
    model: BlackBoxModel,
    matrix: np.ndarray,
    spec: PerturbationSpec,
    samples: int | None = None,
) -> InfidelityEstimate:
    """Monte-Carlo infidelity of an explanation under the given perturbation."""
    return empirical_infidelity(scores, infidelity_inputs(model, matrix, spec, samples))


def integrated_gradients(
    model: BlackBoxModel,
    matrix: np.ndarray,
    baseline: np.ndarray,
    steps: int = 256,
) -> np.ndarray:
    """Midpoint Riemann sum of the gradient along the baseline-to-input path."""
    matrix = as_embedding_matrix(matrix)
    baseline = as_embedding_matrix(baseline)
    if baseline.shape != matrix.shape:
        raise ShapeError("baseline must match the input shape")
    if steps < 1:
        raise ParameterError("steps must be at least 1")
    diff = matrix - baseline
    total = np.zeros_like(matrix)
    for s in range(steps):
        t = (s + 0.5) / steps
        total += model.gradient(baseline + t * diff)
    return total / steps


def mask_top_k(matrix: np.ndarray, scores: np.ndarray | Saliency, scheme: MaskingScheme) -> np.ndarray:
    """Replace the k highest-scoring rows with the MASK (zero) row."""
    matrix = as_embedding_matrix(matrix)
    gamma = scores.scores if isinstance(scores, Saliency) else np.asarray(scores, float)
    n = matrix.shape[0]
    if gamma.shape != (n,):
        raise ShapeError("score length must equal the token count")
    if scheme.k > n:
        raise ParameterError(f"k = {scheme.k} exceeds token count {n}")
    # Stable sort on negated scores leaves ties in index order.
    order = np.argsort(-gamma, kind="stable")[: scheme.k]
    out = matrix.copy()
    out[order] = 0.0
    return out


Explainer = Callable[[BlackBoxModel, np.ndarray], Saliency]


def _predicted_label(value: float) -> int:
    return 1 if value >= 0.5 else 0


def delta_accuracy(
    model: BlackBoxModel,
    table: EmbeddingTable,
    dataset: Sequence[tuple[TokenSequence, int]],
    explainer: Explainer,
    k: int,
    explain_predicted_class: bool = True,
) -> DeltaAccuracyResult:
    """Fraction of correctly classified inputs flipped by top-k masking.

    Saliency is computed for the model's predicted class: for class-0
    predictions the scores are negated before ranking, so the masked tokens
    are the ones supporting the prediction (mask the most positive words of a
    positive text, the most negative words of a negative one).  The returned
    result also carries the literal ``|CC - MC| / CC`` reading for
    compatibility comparisons.
    """
    if not dataset:
        raise ParameterError("dataset must be non-empty")
    labels = {label for _, label in dataset}
    if not labels <= {0, 1}:
        raise UnsupportedLabelsError(
            "only binary labels are implemented; multiclass needs per-class scores"
        )
    scheme = MaskingScheme(k=k)
    correct = 0
    still_correct = 0
    for index, (seq, label) in enumerate(dataset):
        try:
            matrix = embed(table, seq)
            prediction = _predicted_label(model.evaluate(matrix).value)
            if prediction != label:
                continue
            correct += 1
            saliency = explainer(model, matrix)
            ranking = saliency.scores if isinstance(saliency, Saliency) else np.asarray(saliency)
            if explain_predicted_class and prediction == 0:
                ranking = -ranking
            masked = mask_top_k(matrix, ranking, scheme)
            if _predicted_label(model.evaluate(masked).value) == label:
                still_correct += 1
        except Exception as exc:  # noqa: BLE001 - name the failing instance
            raise PipelineError(f"instance {index}", exc) from exc
    return DeltaAccuracyResult(correct=correct, correct_after_masking=still_correct)
