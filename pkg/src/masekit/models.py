"""The black-box model contract and deterministic toy models.

A model maps an ``(n, m)`` embedding matrix to the predicted probability of a
target class.  Evaluation is deterministic, batch evaluation is defined to be
element-wise identical to single evaluation (bit for bit), and gradients are
optional.  All arithmetic is double precision.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import as_embedding_matrix
from .errors import ParameterError, ShapeError, UnsupportedCapabilityError


@dataclass(frozen=True)
class ModelScore:
    """Predicted probability of the target class."""

    value: float
    target_class: int = 1

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0) or not math.isfinite(self.value):
            raise ParameterError(f"model score {self.value} is outside [0, 1]")


def logistic(s: float) -> float:
    """Numerically stable logistic; saturates to 0.0/1.0 without overflow."""
    if s >= 0.0:
        return 1.0 / (1.0 + math.exp(-s))
    t = math.exp(s)
    return t / (1.0 + t)


def logistic_deriv(s: float) -> float:
    p = logistic(s)
    return p * (1.0 - p)


class BlackBoxModel(ABC):
    """Evaluate-only contract: embedding matrix in, class probability out."""

    embedding_dimension: int

    @abstractmethod
    def evaluate(self, matrix: np.ndarray) -> ModelScore:
        raise NotImplementedError

    def batch_evaluate(self, matrices: list[np.ndarray]) -> list[ModelScore]:
        # Defined as element-wise single evaluation so the batch/single
        # consistency invariant holds by construction.
        return [self.evaluate(m) for m in matrices]

    @property
    def supports_gradient(self) -> bool:
        return False

    def gradient(self, matrix: np.ndarray) -> np.ndarray:
        raise UnsupportedCapabilityError(
            f"{type(self).__name__} does not expose an analytic gradient"
        )

    def _check_width(self, matrix: np.ndarray) -> np.ndarray:
        matrix = as_embedding_matrix(matrix)
        if matrix.shape[1] != self.embedding_dimension:
            raise ShapeError(
                f"matrix has {matrix.shape[1]} columns, model expects {self.embedding_dimension}"
            )
        return matrix


class ToyLinearBagModel(BlackBoxModel):
    """Bag-of-embeddings linear scorer: link(bias + sum_i w . E_i).

    With the identity link the caller is responsible for keeping outputs in
    [0, 1]; scores outside that range are rejected by :class:`ModelScore`.
    """

    def __init__(self, weights, bias: float = 0.0, link: str = "logistic"):
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.ndim != 1 or self.weights.size < 1:
            raise ShapeError("weights must be a non-empty 1-D vector")
        if link not in ("logistic", "identity"):
            raise ParameterError(f"unknown link {link!r}")
        self.bias = float(bias)
        self.link = link
        self.embedding_dimension = self.weights.size

    def pre_link_score(self, matrix: np.ndarray) -> float:
        matrix = self._check_width(matrix)
        return self.bias + float(matrix.dot(self.weights).sum())

    def evaluate(self, matrix: np.ndarray) -> ModelScore:
        s = self.pre_link_score(matrix)
        value = logistic(s) if self.link == "logistic" else s
        return ModelScore(value)

    @property
    def supports_gradient(self) -> bool:
        return True

    def gradient(self, matrix: np.ndarray) -> np.ndarray:
        matrix = self._check_width(matrix)
        n = matrix.shape[0]
        if self.link == "logistic":
            scale = logistic_deriv(self.pre_link_score(matrix))
        else:
            scale = 1.0
        return np.tile(scale * self.weights, (n, 1))


class ToyTwoLayerModel(BlackBoxModel):
    """One hidden tanh layer applied per token, mean-pooled, logistic head."""

    def __init__(self, hidden_weights, hidden_bias, output_weights, output_bias: float):
        self.hidden_weights = np.asarray(hidden_weights, dtype=np.float64)
        self.hidden_bias = np.asarray(hidden_bias, dtype=np.float64)
        self.output_weights = np.asarray(output_weights, dtype=np.float64)
        self.output_bias = float(output_bias)
        if self.hidden_weights.ndim != 2:
            raise ShapeError("hidden weights must be (hidden, m)")
        h, m = self.hidden_weights.shape
        if self.hidden_bias.shape != (h,) or self.output_weights.shape != (h,):
            raise ShapeError("hidden bias and output weights must have shape (hidden,)")
        self.embedding_dimension = m

    def _forward(self, matrix: np.ndarray):
        matrix = self._check_width(matrix)
        activations = np.tanh(matrix @ self.hidden_weights.T + self.hidden_bias)
        pooled = activations.mean(axis=0)
        s = float(self.output_weights.dot(pooled)) + self.output_bias
        return matrix, activations, s

    def evaluate(self, matrix: np.ndarray) -> ModelScore:
        _, _, s = self._forward(matrix)
        return ModelScore(logistic(s))

    @property
    def supports_gradient(self) -> bool:
        return True

    def gradient(self, matrix: np.ndarray) -> np.ndarray:
        matrix, activations, s = self._forward(matrix)
        n = matrix.shape[0]
        # d f / d E_i = (1/n) * logistic'(s) * (w_out * (1 - a_i^2)) @ W_hidden
        back = self.output_weights * (1.0 - activations**2)
        return (logistic_deriv(s) / n) * (back @ self.hidden_weights)


def finite_difference_gradient(model: BlackBoxModel, matrix: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient oracle; costs 2*n*m model evaluations."""
    matrix = as_embedding_matrix(matrix)
    out = np.empty_like(matrix)
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            plus = matrix.copy()
            minus = matrix.copy()
            plus[i, j] += step
            minus[i, j] -= step
            out[i, j] = (model.evaluate(plus).value - model.evaluate(minus).value) / (2.0 * step)
    return out


def _fmt17(x: float) -> str:
    # 17 significant digits round-trip float64 exactly.
    return format(float(x), ".17g")


def model_to_text(model: BlackBoxModel) -> str:
    """Render a toy model as key/value text with 17-digit floats."""
    lines: list[str]
    if isinstance(model, ToyLinearBagModel):
        lines = [
            "kind = linear_bag",
            f"dim = {model.embedding_dimension}",
            f"link = {model.link}",
            f"bias = {_fmt17(model.bias)}",
            "weights = " + " ".join(_fmt17(v) for v in model.weights),
        ]
    elif isinstance(model, ToyTwoLayerModel):
        h = model.hidden_weights.shape[0]
        lines = [
            "kind = two_layer",
            f"dim = {model.embedding_dimension}",
            f"hidden = {h}",
            "hidden_weights = " + " ".join(_fmt17(v) for v in model.hidden_weights.ravel()),
            "hidden_bias = " + " ".join(_fmt17(v) for v in model.hidden_bias),
            "output_weights = " + " ".join(_fmt17(v) for v in model.output_weights),
            f"output_bias = {_fmt17(model.output_bias)}",
        ]
    else:
        raise ParameterError(f"cannot serialize model type {type(model).__name__}")
    return "\n".join(lines) + "\n"


def save_model(model: BlackBoxModel, path: str | Path) -> None:
    Path(path).write_text(model_to_text(model), encoding="utf-8")


def parse_model(text: str) -> BlackBoxModel:
    fields: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParameterError(f"model file line is not 'key = value': {line!r}")
        fields[key.strip()] = value.strip()
    kind = fields.get("kind")
    if kind == "linear_bag":
        weights = np.array([float(v) for v in fields["weights"].split()])
        return ToyLinearBagModel(weights, float(fields["bias"]), fields.get("link", "logistic"))
    if kind == "two_layer":
        m = int(fields["dim"])
        h = int(fields["hidden"])
        w1 = np.array([float(v) for v in fields["hidden_weights"].split()]).reshape(h, m)
        b1 = np.array([float(v) for v in fields["hidden_bias"].split()])
        w2 = np.array([float(v) for v in fields["output_weights"].split()])
        return ToyTwoLayerModel(w1, b1, w2, float(fields["output_bias"]))
    raise ParameterError(f"unknown model kind {kind!r}")


def load_model(path: str | Path) -> BlackBoxModel:
    return parse_model(Path(path).read_text(encoding="utf-8"))
