"""Saliency estimators fitted to perturbation responses.

Three estimators share one covariate convention: the regression pairs the
response ``y_j = f(perturbed_j) - f(base)`` with the coefficient offsets
``z_j = c_j - 1``, so positive scores mark tokens whose upscaling raises the
model output (the estimate approximates the ascent direction).  There is no
intercept: the offsets are mean-zero by construction and ``y(0) = 0``.

* ``mase_closed_form``: ``gamma = Sigma^-1 * mean(y_j z_j)`` using the nominal
  sampling covariance, solved through a Cholesky factorization.
* ``mase_ols``: the empirical least-squares minimizer
  ``gamma = (Z^T Z)^-1 Z^T y``; identical to the closed form with the
  empirical covariance plugged in, and the exact minimizer of the empirical
  infidelity on the same batch.
* ``mase_sparse_lp``: ``min |g|_1  s.t.  |mean(y_j z_j) - Sigma g|_inf <= L``
  solved as a linear program in split form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    CovarianceError,
    EmptyBatchError,
    ParameterError,
    PipelineError,
    RankDeficientError,
    ShapeError,
)
from .models import BlackBoxModel
from .perturbation import (
    DEFAULT_MAX_ELEMENTS,
    PerturbationSpec,
    sample_nlgp,
)
from .simplex import solve_inequality_lp


@dataclass(frozen=True)
class Saliency:
    """Per-token importance scores plus provenance of how they were computed."""

    scores: np.ndarray
    method: str
    sample_count: int | None = None
    hyperparameters: dict = field(default_factory=dict)
    base_score: float | None = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1:
            raise ShapeError("saliency scores must be a 1-D vector")
        if not np.all(np.isfinite(scores)):
            raise ParameterError("saliency scores must be finite")
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class RegressionInputs:
    """Covariates, responses, and the nominal covariance for one fit."""

    offsets: np.ndarray  # Z, (N, n)
    responses: np.ndarray  # y, (N,)
    covariance: np.ndarray  # Sigma, (n, n)

    def __post_init__(self):
        z = np.asarray(self.offsets, dtype=np.float64)
        y = np.asarray(self.responses, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if z.ndim != 2:
            raise ShapeError("offsets must be (N, n)")
        if y.shape != (z.shape[0],):
            raise ShapeError("responses must align with offset rows")
        if cov.shape != (z.shape[1], z.shape[1]):
            raise ShapeError("covariance must be n-by-n")
        if not np.all(np.isfinite(y)):
            raise ParameterError("responses must be finite")
        object.__setattr__(self, "offsets", z)
        object.__setattr__(self, "responses", y)
        object.__setattr__(self, "covariance", cov)

    @property
    def sample_count(self) -> int:
        return self.offsets.shape[0]

    @property
    def token_count(self) -> int:
        return self.offsets.shape[1]


@dataclass(frozen=True)
class SparseSpec:
    """Sparsity budget and solver controls for the L1 estimator."""

    budget: float
    lp_tolerance: float = 1e-9
    max_iterations: int = 10_000

    def __post_init__(self):
        if self.budget < 0.0:
            raise ParameterError("sparsity budget L must be non-negative")
        if self.lp_tolerance <= 0.0 or self.max_iterations < 1:
            raise ParameterError("lp tolerance must be positive and iterations >= 1")


DEGENERATE_WARNING = "degenerate-batch: all responses identical"


def _moment_vector(inputs: RegressionInputs) -> np.ndarray:
    return inputs.offsets.T @ inputs.responses / inputs.sample_count


def mase_closed_form(inputs: RegressionInputs) -> Saliency:
    """Closed-form estimate from the nominal covariance; never inverts Sigma."""
    if inputs.sample_count == 0:
        raise EmptyBatchError("closed-form estimator needs at least one sample")
    if inputs.sample_count >= 2 and np.ptp(inputs.responses) == 0.0:
        return Saliency(
            scores=np.zeros(inputs.token_count),
            method="mase-closed-form",
            sample_count=inputs.sample_count,
            warnings=(DEGENERATE_WARNING,),
        )
    try:
        factor = cho_factor(inputs.covariance)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("covariance is singular or not positive definite") from exc
    gamma = cho_solve(factor, _moment_vector(inputs))
    return Saliency(scores=gamma, method="mase-closed-form", sample_count=inputs.sample_count)


def mase_ols(inputs: RegressionInputs) -> Saliency:
    """Through-the-origin least squares; exact minimizer of the batch loss."""
    if inputs.sample_count == 0:
        raise EmptyBatchError("least-squares estimator needs at least one sample")
    gamma, _, rank, _ = np.linalg.lstsq(inputs.offsets, inputs.responses, rcond=None)
    if rank < inputs.token_count:
        raise RankDeficientError(rank=int(rank), needed=inputs.token_count)
    return Saliency(scores=gamma, method="mase-ols", sample_count=inputs.sample_count)


def mase_sparse_lp(inputs: RegressionInputs, spec: SparseSpec) -> Saliency:
    """L1-minimal scores subject to the infinity-norm moment constraint.

    Split form: with ``x = [g+; g-] >= 0`` minimize ``sum(g+) + sum(g-)``
    subject to ``-L <= b - Sigma (g+ - g-) <= L`` where ``b`` is the empirical
    moment vector; 2n inequality rows in total.
    """
    if inputs.sample_count == 0:
        raise EmptyBatchError("sparse estimator needs at least one sample")
    n = inputs.token_count
    sigma = inputs.covariance
    try:
        cho_factor(sigma)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("covariance is singular or not positive definite") from exc
    b = _moment_vector(inputs)
    constraint = np.vstack(
        [np.hstack([sigma, -sigma]), np.hstack([-sigma, sigma])]
    )
    rhs = np.concatenate([spec.budget + b, spec.budget - b])
    cost = np.ones(2 * n)
    result = solve_inequality_lp(
        cost, constraint, rhs, tol=spec.lp_tolerance, max_iterations=spec.max_iterations
    )
    gamma = result.x[:n] - result.x[n:]
    residual = float(np.max(np.abs(b - sigma @ gamma)))
    return Saliency(
        scores=gamma,
        method="mase-sparse",
        sample_count=inputs.sample_count,
        hyperparameters={
            "L": spec.budget,
            "l1_objective": result.objective,
            "constraint_residual": residual,
            "lp_iterations": result.iterations,
        },
    )


def collect_regression_inputs(
    model: BlackBoxModel,
    matrix: np.ndarray,
    spec: PerturbationSpec,
    chunk_size: int | None = None,
) -> tuple[RegressionInputs, float]:
    """Sample perturbations, score them, and assemble the regression arrays.

    Sampling streams in chunks (bit-identical to one monolithic batch) so the
    perturbed matrices never exceed the configured memory bound.
    """
    n, m = matrix.shape
    if chunk_size is None:
        chunk_size = max(1, min(spec.samples, DEFAULT_MAX_ELEMENTS // max(1, 2 * n * m)))
    base = model.evaluate(matrix).value
    offsets = np.empty((spec.samples, n))
    responses = np.empty(spec.samples)
    start = 0
    while start < spec.samples:
        count = min(chunk_size, spec.samples - start)
        batch = sample_nlgp(matrix, spec, start=start, count=count)
        scores = model.batch_evaluate(batch.matrices())
        offsets[start : start + count] = batch.offsets
        responses[start : start + count] = [s.value for s in scores]
        start += count
    responses -= base
    inputs = RegressionInputs(
        offsets=offsets, responses=responses, covariance=spec.covariance_matrix(n)
    )
    return inputs, base


ESTIMATOR_OLS = "ols"
ESTIMATOR_CLOSED_FORM = "closed-form"
ESTIMATOR_SPARSE = "sparse"


def explain(
    model: BlackBoxModel,
    matrix: np.ndarray,
    spec: PerturbationSpec,
    sparse: SparseSpec | None = None,
    estimator: str | None = None,
    chunk_size: int | None = None,
) -> Saliency:
    """Full pipeline: sample perturbations, score, and fit an estimator.

    Without a sparsity assumption the default is the empirical-covariance
    closed form (= least squares), which converges faster than plugging in
    the nominal covariance; pass ``estimator='closed-form'`` for the latter.
    A :class:`SparseSpec` switches to the L1 linear program.
    """
    if matrix.shape[1] != model.embedding_dimension:
        raise ShapeError(
            f"matrix has {matrix.shape[1]} columns, model expects {model.embedding_dimension}"
        )
    if estimator is None:
        estimator = ESTIMATOR_SPARSE if sparse is not None else ESTIMATOR_OLS
    if estimator not in (ESTIMATOR_SPARSE, ESTIMATOR_CLOSED_FORM, ESTIMATOR_OLS):
        raise ParameterError(f"unknown estimator {estimator!r}")
    if estimator == ESTIMATOR_SPARSE and sparse is None:
        raise ParameterError("sparse estimator requested without a SparseSpec")

    try:
        inputs, base = collect_regression_inputs(model, matrix, spec, chunk_size=chunk_size)
    except Exception as exc:  # noqa: BLE001 - annotate the failing stage
        raise PipelineError("sample-and-evaluate", exc) from exc

    try:
        if estimator == ESTIMATOR_SPARSE:
            result = mase_sparse_lp(inputs, sparse)
        elif estimator == ESTIMATOR_CLOSED_FORM:
            result = mase_closed_form(inputs)
        else:
            result = mase_ols(inputs)
    except Exception as exc:  # noqa: BLE001
        raise PipelineError("fit", exc) from exc

    hyper = dict(result.hyperparameters)
    hyper.update({"sigma": spec.sigma, "style": spec.style, "seed": spec.seed})
    return Saliency(
        scores=result.scores,
        method=result.method,
        sample_count=spec.samples,
        hyperparameters=hyper,
        base_score=base,
        warnings=result.warnings,
    )
