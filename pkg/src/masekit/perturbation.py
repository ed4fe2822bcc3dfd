"""Normalized linear Gaussian perturbation of an embedding matrix.

Per-token coefficients ``c`` are drawn from ``Gaussian(1, Sigma)`` and applied
along each embedding row's own direction, so every perturbed row stays in the
span of the original row.  Two application styles are supported:

* ``normalized-additive`` (default): ``E'_i = E_i + z_i * unit(E_i)`` with
  ``z = c - 1``, i.e. noise of equal magnitude for every token regardless of
  its embedding length.  Zero rows (the MASK row) are never perturbed.
* ``pure-scaling``: ``E'_i = c_i * E_i``.

Sample ``j`` of a batch is drawn from a counter-based substream determined by
``(seed, j)`` alone, so batches are reproducible bit-for-bit regardless of
chunk boundaries or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CapacityError,
    CovarianceError,
    InsufficientSamplesError,
    ParameterError,
    ShapeError,
)
from .rng import STREAM_NLGP, sample_normals

NORMALIZED_ADDITIVE = "normalized-additive"
PURE_SCALING = "pure-scaling"

_ZERO_ROW_EPS = 1e-12

# Ceiling on count * n * m float64 elements materialized by one batch.
DEFAULT_MAX_ELEMENTS = 100_000_000


@dataclass(frozen=True)
class PerturbationSpec:
    """Noise scale, covariance, sample budget, seed, and application style.

    ``sigma = 0`` is accepted as a degenerate no-noise setting for tests.
    An explicit covariance must be symmetric positive definite and overrides
    ``sigma``.
    """

    sigma: float = 0.1
    samples: int = 1000
    seed: int = 0
    style: str = NORMALIZED_ADDITIVE
    covariance: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ParameterError("sigma must be non-negative")
        if self.samples < 1:
            raise ParameterError("sample count must be at least 1")
        if self.style not in (NORMALIZED_ADDITIVE, PURE_SCALING):
            raise ParameterError(f"unknown perturbation style {self.style!r}")
        if self.covariance is not None:
            cov = np.asarray(self.covariance, dtype=np.float64)
            if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
                raise CovarianceError("explicit covariance must be a square matrix")
            if not np.allclose(cov, cov.T, atol=0.0, rtol=1e-12):
                raise CovarianceError("explicit covariance must be symmetric")
            object.__setattr__(self, "covariance", cov)

    def covariance_matrix(self, n: int) -> np.ndarray:
        """The n-by-n coefficient covariance this spec induces."""
        if self.covariance is not None:
            if self.covariance.shape[0] != n:
                raise ShapeError(
                    f"covariance is {self.covariance.shape[0]}x{self.covariance.shape[0]}, "
                    f"sequence has {n} tokens"
                )
            return self.covariance.copy()
        return (self.sigma**2) * np.eye(n)

    def _chol_factor(self, n: int) -> np.ndarray | None:
        if self.covariance is None:
            return None
        if self.covariance.shape[0] != n:
            raise ShapeError(
                f"covariance is {self.covariance.shape[0]}x{self.covariance.shape[0]}, "
                f"sequence has {n} tokens"
            )
        try:
            return np.linalg.cholesky(self.covariance)
        except np.linalg.LinAlgError as exc:
            raise CovarianceError("explicit covariance is not positive definite") from exc


@dataclass(frozen=True)
class PerturbationBatch:
    """Coefficient draws, their offsets, and the induced perturbed matrices."""

    coefficients: np.ndarray  # (count, n)
    offsets: np.ndarray  # (count, n), exactly coefficients - 1
    perturbed: np.ndarray  # (count, n, m)
    spec: PerturbationSpec
    start: int = 0
    base: np.ndarray = field(default=None, repr=False)

    @property
    def sample_count(self) -> int:
        return self.coefficients.shape[0]

    def matrices(self) -> list[np.ndarray]:
        return [self.perturbed[i] for i in range(self.sample_count)]


def normalize_rows(matrix: np.ndarray, eps: float = _ZERO_ROW_EPS) -> np.ndarray:
    """Scale each row to unit length; rows with norm <= eps pass through."""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    scale = np.where(norms > eps, norms, 1.0)
    return matrix / scale[:, None]


def apply_offsets(matrix: np.ndarray, offsets: np.ndarray, style: str = NORMALIZED_ADDITIVE) -> np.ndarray:
    """Apply coefficient offsets ``z`` to one matrix under the given style."""
    offsets = np.asarray(offsets, dtype=np.float64)
    if offsets.shape != (matrix.shape[0],):
        raise ShapeError(f"offsets shape {offsets.shape} does not match {matrix.shape[0]} tokens")
    if style == NORMALIZED_ADDITIVE:
        return matrix + offsets[:, None] * normalize_rows(matrix)
    if style == PURE_SCALING:
        return (1.0 + offsets)[:, None] * matrix
    raise ParameterError(f"unknown perturbation style {style!r}")


def sample_nlgp(
    matrix: np.ndarray,
    spec: PerturbationSpec,
    start: int = 0,
    count: int | None = None,
    max_elements: int = DEFAULT_MAX_ELEMENTS,
) -> PerturbationBatch:
    """Draw perturbation samples ``start .. start+count`` for ``matrix``.

    Raises :class:`CapacityError` when the materialized batch would exceed
    ``max_elements`` float64 values; callers should then stream smaller
    chunks (``explain`` does this automatically).
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    n, m = matrix.shape
    if count is None:
        count = spec.samples - start
    if count < 0 or start < 0 or start + count > spec.samples:
        raise ParameterError(
            f"sample range [{start}, {start + count}) outside budget {spec.samples}"
        )
    if count * n * m > max_elements:
        raise CapacityError(
            f"batch of {count} samples x {n}x{m} matrix exceeds {max_elements} elements; "
            "stream smaller chunks instead"
        )
    chol = spec._chol_factor(n)

    eps = sample_normals(spec.seed, STREAM_NLGP, start, count, n)
    if chol is not None:
        noise = eps @ chol.T
    else:
        noise = spec.sigma * eps
    coefficients = 1.0 + noise
    # Derived from the rounded coefficients so Z = C - 1 holds bit-exactly.
    offsets = coefficients - 1.0

    if spec.style == NORMALIZED_ADDITIVE:
        unit = normalize_rows(matrix)
        perturbed = np.multiply(offsets[:, :, None], unit[None, :, :])
        perturbed += matrix
    else:
        perturbed = np.multiply(coefficients[:, :, None], matrix[None, :, :])

    return PerturbationBatch(
        coefficients=coefficients,
        offsets=offsets,
        perturbed=perturbed,
        spec=spec,
        start=start,
        base=matrix.copy(),
    )


def empirical_covariance(offsets_or_batch) -> np.ndarray:
    """Mean-zero second-moment matrix ``Z^T Z / N`` of the coefficient offsets."""
    if isinstance(offsets_or_batch, PerturbationBatch):
        offsets = offsets_or_batch.offsets
    else:
        offsets = np.asarray(offsets_or_batch, dtype=np.float64)
    if offsets.ndim != 2:
        raise ShapeError("offsets must be a (N, n) matrix")
    n_samples = offsets.shape[0]
    if n_samples < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {n_samples}")
    return offsets.T @ offsets / n_samples


def dump_coefficients_csv(batch: PerturbationBatch, path: str | Path) -> None:
    """Debug dump of the coefficient draws with an 8-line spec header."""
    spec = batch.spec
    header = [
        "# source = nlgp-perturbation",
        f"# sigma = {spec.sigma!r}",
        f"# samples = {spec.samples}",
        f"# seed = {spec.seed}",
        f"# style = {spec.style}",
        f"# covariance = {'explicit' if spec.covariance is not None else 'isotropic'}",
        f"# tokens = {batch.coefficients.shape[1]}",
        f"# start = {batch.start}",
    ]
    n = batch.coefficients.shape[1]
    rows = [",".join(f"c_{i}" for i in range(n))]
    for row in batch.coefficients:
        rows.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(header + rows) + "\n", encoding="utf-8")
