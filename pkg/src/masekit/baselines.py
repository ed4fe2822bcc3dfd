"""Baseline explainers the saliency estimators are benchmarked against.

All of them operate at the word level: a token is either present or replaced
by the zero MASK row.  Every explainer is a pure function of
``(model, matrix, seed)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .embeddings import as_embedding_matrix
from .errors import ParameterError, ShapeError, UnsupportedCapabilityError
from .estimators import Saliency
from .models import BlackBoxModel, finite_difference_gradient
from .rng import (
    STREAM_LIME,
    STREAM_PERMUTATION,
    STREAM_RANDOM_SCORES,
    STREAM_SHAP,
    philox_generator,
)

LIME_EXPONENTIAL = "lime-exponential"
SHAP_COMBINATORIAL = "shap-combinatorial"

RANK_WARNING = "rank-deficient-design"
CONSTANT_RESPONSE_WARNING = "degenerate-batch: all responses identical"


@dataclass(frozen=True)
class MaskPattern:
    """Binary word-presence pattern: 1 keeps the word, 0 masks it."""

    present: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.present)
        if arr.ndim != 1 or not np.all((arr == 0) | (arr == 1)):
            raise ParameterError("mask pattern must be a 1-D 0/1 vector")
        object.__setattr__(self, "present", arr.astype(np.float64))

    @property
    def present_count(self) -> int:
        return int(self.present.sum())


@dataclass(frozen=True)
class KernelSpec:
    """Weighting kernel for the surrogate regressions."""

    kind: str = LIME_EXPONENTIAL
    width: float = 0.25
    penalty: float = 0.0

    def __post_init__(self):
        if self.kind not in (LIME_EXPONENTIAL, SHAP_COMBINATORIAL):
            raise ParameterError(f"unknown kernel kind {self.kind!r}")
        if self.kind == LIME_EXPONENTIAL and self.width <= 0.0:
            raise ParameterError("kernel width must be positive")
        if self.penalty < 0.0:
            raise ParameterError("penalty must be non-negative")


def apply_mask_pattern(matrix: np.ndarray, pattern: MaskPattern | np.ndarray) -> np.ndarray:
    present = pattern.present if isinstance(pattern, MaskPattern) else np.asarray(pattern, float)
    if present.shape != (matrix.shape[0],):
        raise ShapeError("mask pattern length must equal the token count")
    return matrix * present[:, None]


def _mask_row_replaced(matrix: np.ndarray, row: int) -> np.ndarray:
    out = matrix.copy()
    out[row] = 0.0
    return out


def occlusion_explain(model: BlackBoxModel, matrix: np.ndarray) -> Saliency:
    """score_i = f(E) - f(E with row i masked); exactly n+1 evaluations."""
    matrix = as_embedding_matrix(matrix)
    n = matrix.shape[0]
    batch = [matrix] + [_mask_row_replaced(matrix, i) for i in range(n)]
    values = [s.value for s in model.batch_evaluate(batch)]
    base = values[0]
    return Saliency(
        scores=np.array([base - v for v in values[1:]]),
        method="occlusion",
        sample_count=n + 1,
        base_score=base,
    )


def _cosine_distance_to_ones(patterns: np.ndarray) -> np.ndarray:
    # For binary u: cos(u, 1) = sqrt(|u| / n); empty patterns get distance 1.
    n = patterns.shape[1]
    frac = patterns.sum(axis=1) / n
    return 1.0 - np.sqrt(frac)


def _soft_threshold(value: float, amount: float) -> float:
    if value > amount:
        return value - amount
    if value < -amount:
        return value + amount
    return 0.0


def _weighted_lasso(design, response, weights, penalty, max_sweeps=10_000, tol=1e-12):
    """Minimize sum_j w_j (y_j - a - x_j.beta)^2 + penalty * |beta|_1.

    Cyclic coordinate descent with an unpenalized intercept; deterministic.
    """
    n_features = design.shape[1]
    beta = np.zeros(n_features)
    total_weight = weights.sum()
    col_norms = np.array([(weights * design[:, i] ** 2).sum() for i in range(n_features)])
    intercept = float((weights * response).sum() / total_weight)
    residual = response - intercept - design @ beta
    for _ in range(max_sweeps):
        biggest = 0.0
        for i in range(n_features):
            if col_norms[i] == 0.0:
                continue
            rho = float((weights * design[:, i] * (residual + design[:, i] * beta[i])).sum())
            new = _soft_threshold(rho, penalty / 2.0) / col_norms[i]
            if new != beta[i]:
                residual += design[:, i] * (beta[i] - new)
                biggest = max(biggest, abs(new - beta[i]))
                beta[i] = new
        new_intercept = intercept + float((weights * residual).sum() / total_weight)
        if new_intercept != intercept:
            residual += intercept - new_intercept
            biggest = max(biggest, abs(new_intercept - intercept))
            intercept = new_intercept
        if biggest <= tol:
            break
    return intercept, beta


def lime_explain(
    model: BlackBoxModel,
    matrix: np.ndarray,
    samples: int,
    kernel: KernelSpec | None = None,
    seed: int = 0,
    patterns: np.ndarray | None = None,
    keep_top: int | None = None,
) -> Saliency:
    """Locally weighted surrogate on Bernoulli(0.5) word-presence patterns.

    Weights are ``exp(-D(u, 1)^2 / width^2)`` with D the cosine distance
    between the pattern and the all-ones pattern.  ``patterns`` overrides the
    sampled design (diagnostics and tests); ``keep_top`` zeroes all but the
    largest-magnitude coefficients.
    """
    matrix = as_embedding_matrix(matrix)
    kernel = kernel or KernelSpec()
    if kernel.kind != LIME_EXPONENTIAL:
        raise ParameterError("lime requires the lime-exponential kernel")
    n = matrix.shape[0]
    if patterns is None:
        gen = philox_generator(seed, STREAM_LIME)
        patterns = (gen.random((samples, n)) < 0.5).astype(np.float64)
    else:
        patterns = np.asarray(patterns, dtype=np.float64)
        if patterns.ndim != 2 or patterns.shape[1] != n:
            raise ShapeError("pattern matrix must be (N, n)")
    responses = np.array(
        [s.value for s in model.batch_evaluate([apply_mask_pattern(matrix, u) for u in patterns])]
    )
    distances = _cosine_distance_to_ones(patterns)
    weights = np.exp(-(distances**2) / kernel.width**2)

    hyper = {"width": kernel.width, "penalty": kernel.penalty, "mask_probability": 0.5}
    warn: tuple[str, ...] = ()
    if np.ptp(responses) == 0.0:
        scores = np.zeros(n)
        warn = (CONSTANT_RESPONSE_WARNING,)
    elif kernel.penalty == 0.0:
        design = np.hstack([np.ones((patterns.shape[0], 1)), patterns])
        scaled = np.sqrt(weights)[:, None] * design
        coef, _, rank, _ = np.linalg.lstsq(scaled, np.sqrt(weights) * responses, rcond=None)
        if rank < design.shape[1]:
            scores = np.zeros(n)
            warn = (RANK_WARNING,)
        else:
            scores = coef[1:]
    else:
        _, scores = _weighted_lasso(patterns, responses, weights, kernel.penalty)

    if keep_top is not None and keep_top < n:
        keep = np.argsort(-np.abs(scores), kind="stable")[:keep_top]
        truncated = np.zeros(n)
        truncated[keep] = scores[keep]
        scores = truncated
        hyper["keep_top"] = keep_top

    return Saliency(
        scores=scores,
        method="lime",
        sample_count=patterns.shape[0],
        hyperparameters=hyper,
        warnings=warn,
    )


def _shap_kernel_weight(n: int, size: int) -> float:
    return (n - 1) / (comb(n, size) * size * (n - size))


def kernel_shap_explain(
    model: BlackBoxModel,
    matrix: np.ndarray,
    samples: int = 2048,
    seed: int = 0,
    background: list[np.ndarray] | None = None,
) -> Saliency:
    """Shapley-kernel weighted regression over word coalitions.

    Coalitions of size 0 and n carry infinite kernel weight and are excluded;
    they enter through the efficiency constraint
    ``sum(gamma) = f(E) - f(all-MASK)`` instead, which is enforced exactly by
    eliminating one coefficient.  Absent words are replaced by the MASK row,
    or by rows of a drawn ``background`` matrix when provided.
    """
    matrix = as_embedding_matrix(matrix)
    n = matrix.shape[0]
    if n < 2:
        raise ParameterError("kernel SHAP needs at least two tokens")
    gen = philox_generator(seed, STREAM_SHAP)

    def absent_filler() -> np.ndarray:
        if background is None:
            return np.zeros_like(matrix)
        chosen = np.asarray(background[int(gen.integers(len(background)))], dtype=np.float64)
        if chosen.shape != matrix.shape:
            raise ShapeError("background matrices must match the instance shape")
        return chosen

    exact = (2**n - 2) <= samples
    patterns: list[np.ndarray] = []
    weights: list[float] = []
    if exact:
        for bits in range(1, 2**n - 1):
            u = np.array([(bits >> i) & 1 for i in range(n)], dtype=np.float64)
            patterns.append(u)
            weights.append(_shap_kernel_weight(n, int(u.sum())))
    else:
        size_weights = np.array([_shap_kernel_weight(n, s) * comb(n, s) for s in range(1, n)])
        size_prob = size_weights / size_weights.sum()
        sizes = gen.choice(np.arange(1, n), size=samples, p=size_prob)
        for s in sizes:
            u = np.zeros(n)
            u[gen.permutation(n)[:s]] = 1.0
            patterns.append(u)
            weights.append(1.0)  # sampling frequency already follows the kernel
    design = np.array(patterns)
    weight_arr = np.array(weights)

    coalition_matrices = [
        u[:, None] * matrix + (1.0 - u[:, None]) * absent_filler() for u in design
    ]
    all_absent = absent_filler()
    values = [
        s.value
        for s in model.batch_evaluate([matrix, all_absent] + coalition_matrices)
    ]
    full_value, empty_value = values[0], values[1]
    responses = np.array(values[2:])
    total = full_value - empty_value

    # Eliminate gamma_{n-1} through the efficiency constraint.
    reduced = design[:, :-1] - design[:, -1:]
    target = responses - empty_value - design[:, -1] * total
    scaled = np.sqrt(weight_arr)[:, None] * reduced
    coef, _, _, _ = np.linalg.lstsq(scaled, np.sqrt(weight_arr) * target, rcond=None)
    gamma = np.concatenate([coef, [total - coef.sum()]])

    return Saliency(
        scores=gamma,
        method="kernel-shap",
        sample_count=design.shape[0],
        hyperparameters={
            "exact": float(exact),
            "background_size": 0.0 if background is None else float(len(background)),
        },
        base_score=full_value,
    )


def permutation_importance(
    model: BlackBoxModel,
    matrix: np.ndarray,
    background: list[np.ndarray],
    repeats: int = 10,
    seed: int = 0,
) -> Saliency:
    """score_i = mean over draws of f(E) - f(E with row i swapped from background)."""
    matrix = as_embedding_matrix(matrix)
    if not background:
        raise ParameterError("background must be non-empty")
    if repeats < 1:
        raise ParameterError("repeats must be at least 1")
    for bg in background:
        if np.asarray(bg).shape != matrix.shape:
            raise ShapeError(
                f"background matrix of shape {np.asarray(bg).shape} does not match {matrix.shape}"
            )
    n = matrix.shape[0]
    gen = philox_generator(seed, STREAM_PERMUTATION)
    picks = gen.integers(len(background), size=(repeats, n))
    swapped = []
    for r in range(repeats):
        for i in range(n):
            candidate = matrix.copy()
            candidate[i] = background[int(picks[r, i])][i]
            swapped.append(candidate)
    values = [s.value for s in model.batch_evaluate([matrix] + swapped)]
    base = values[0]
    diffs = base - np.array(values[1:]).reshape(repeats, n)
    return Saliency(
        scores=diffs.mean(axis=0),
        method="permutation-importance",
        sample_count=repeats * n + 1,
        hyperparameters={"repeats": repeats, "background_size": len(background)},
        base_score=base,
    )


def grad_l2_explain(model: BlackBoxModel, matrix: np.ndarray, fd_step: float = 1e-5) -> Saliency:
    """Per-token L2 norm of the gradient; finite differences when needed."""
    matrix = as_embedding_matrix(matrix)
    try:
        grad = model.gradient(matrix)
        path = "analytic"
    except UnsupportedCapabilityError:
        grad = finite_difference_gradient(model, matrix, step=fd_step)
        path = "finite-difference"
    return Saliency(
        scores=np.linalg.norm(grad, axis=1),
        method="grad-l2",
        hyperparameters={"path": path},
    )


def random_explain(n: int, seed: int = 0) -> Saliency:
    """Seeded i.i.d. uniform(0, 1) scores; the no-information baseline."""
    if n < 1:
        raise ParameterError("need at least one token")
    scores = philox_generator(seed, STREAM_RANDOM_SCORES).random(n)
    return Saliency(scores=scores, method="random", hyperparameters={"seed": seed})
