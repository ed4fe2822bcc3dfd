"""Synthetic corpora and a trainable linear probe for desk-scale experiments.

Two label rules are supported:

* ``linear-teacher``: a hidden linear scorer labels each sequence by the sign
  of its pre-link score, so the data is perfectly separable by construction.
* ``planted-keyword``: the label marks the presence of any planted token;
  positives carry exactly one planted occurrence, giving a ground-truth
  "important word" per instance.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .embeddings import EmbeddingTable, TokenSequence, embed
from .errors import ConfigError, ParameterError, UnsupportedLabelsError
from .models import ToyLinearBagModel
from .rng import STREAM_CORPUS, STREAM_PROBE, philox_generator

LINEAR_TEACHER = "linear-teacher"
PLANTED_KEYWORD = "planted-keyword"

_HALF_ULP53 = 2.0**-54


def _normals(generator, shape):
    # Inverse-CDF transform; same fixed pathway as the perturbation sampler.
    return ndtri(generator.random(shape) + _HALF_ULP53)


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    vocab_size: int
    embedding_dim: int
    sequence_length: int
    instances: int
    label_rule: str
    planted_keywords: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.label_rule not in (LINEAR_TEACHER, PLANTED_KEYWORD):
            raise ConfigError(f"unknown label rule {self.label_rule!r}")
        if min(self.vocab_size, self.embedding_dim, self.sequence_length, self.instances) < 1:
            raise ConfigError("corpus dimensions must all be positive")
        if self.vocab_size < self.sequence_length:
            raise ConfigError("vocabulary must be at least as large as the sequence length")
        if self.label_rule == PLANTED_KEYWORD:
            if self.planted_keywords < 1 or self.planted_keywords > self.sequence_length:
                raise ConfigError("planted keyword count must be in [1, sequence_length]")
            if self.planted_keywords >= self.vocab_size:
                raise ConfigError("planted keywords must leave some ordinary vocabulary")


@dataclass(frozen=True)
class CorpusBundle:
    table: EmbeddingTable
    instances: list[tuple[TokenSequence, int]]
    spec: SyntheticCorpusSpec | None = None
    teacher: ToyLinearBagModel | None = None
    planted_tokens: tuple[int, ...] = ()

    @property
    def sequence_length(self) -> int:
        return len(self.instances[0][0])


def generate_corpus(spec: SyntheticCorpusSpec) -> CorpusBundle:
    """Deterministically generate (table, labelled instances) from the spec.

    Embedding rows are standard Gaussian draws normalized to unit length;
    token ids run from 1 to vocab_size with 0 reserved for MASK.
    """
    gen = philox_generator(spec.seed, STREAM_CORPUS)
    raw = _normals(gen, (spec.vocab_size, spec.embedding_dim))
    rows = raw / np.linalg.norm(raw, axis=1)[:, None]
    table = EmbeddingTable(
        spec.embedding_dim, {tid + 1: rows[tid] for tid in range(spec.vocab_size)}
    )

    teacher = None
    planted: tuple[int, ...] = ()
    instances: list[tuple[TokenSequence, int]] = []

    if spec.label_rule == LINEAR_TEACHER:
        direction = _normals(gen, spec.embedding_dim)
        direction /= np.linalg.norm(direction)
        teacher = ToyLinearBagModel(direction, bias=0.0)
        for _ in range(spec.instances):
            tokens = tuple(int(t) for t in gen.integers(1, spec.vocab_size + 1, spec.sequence_length))
            seq = TokenSequence(tokens)
            label = 1 if teacher.pre_link_score(embed(table, seq)) >= 0.0 else 0
            instances.append((seq, label))
    else:
        chosen = gen.choice(spec.vocab_size, size=spec.planted_keywords, replace=False)
        planted = tuple(int(t) + 1 for t in sorted(chosen))
        ordinary = np.array([t for t in range(1, spec.vocab_size + 1) if t not in planted])
        for _ in range(spec.instances):
            positive = bool(gen.random() < 0.5)
            body = gen.choice(ordinary, size=spec.sequence_length, replace=True)
            tokens = [int(t) for t in body]
            if positive:
                slot = int(gen.integers(spec.sequence_length))
                tokens[slot] = int(planted[int(gen.integers(len(planted)))])
            instances.append((TokenSequence(tuple(tokens)), 1 if positive else 0))

    return CorpusBundle(
        table=table, instances=instances, spec=spec, teacher=teacher, planted_tokens=planted
    )


def instances_to_text(instances: list[tuple[TokenSequence, int]]) -> str:
    """Text format: header ``<count> <sequence_length>``, then ``label\\ttokens``."""
    if not instances:
        raise ParameterError("nothing to save")
    length = len(instances[0][0])
    lines = [f"{len(instances)} {length}"]
    for seq, label in instances:
        lines.append(f"{label}\t" + " ".join(str(t) for t in seq.tokens))
    return "\n".join(lines) + "\n"


def save_instances(instances: list[tuple[TokenSequence, int]], path: str | Path) -> None:
    Path(path).write_text(instances_to_text(instances), encoding="utf-8")


def parse_instances(text: str) -> list[tuple[TokenSequence, int]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParameterError("instances text is empty")
    count, length = (int(v) for v in lines[0].split())
    out: list[tuple[TokenSequence, int]] = []
    for ln in lines[1:]:
        label_text, _, token_text = ln.partition("\t")
        tokens = tuple(int(t) for t in token_text.split())
        if len(tokens) != length:
            raise ParameterError(f"instance has {len(tokens)} tokens, header says {length}")
        out.append((TokenSequence(tokens), int(label_text)))
    if len(out) != count:
        raise ParameterError(f"header declares {count} instances, file holds {len(out)}")
    return out


def load_instances(path: str | Path) -> list[tuple[TokenSequence, int]]:
    return parse_instances(Path(path).read_text(encoding="utf-8"))


def _vector_logistic(scores: np.ndarray) -> np.ndarray:
    out = np.empty_like(scores)
    positive = scores >= 0.0
    out[positive] = 1.0 / (1.0 + np.exp(-scores[positive]))
    expd = np.exp(scores[~positive])
    out[~positive] = expd / (1.0 + expd)
    return out


@dataclass(frozen=True)
class TrainedProbe:
    model: ToyLinearBagModel
    train_accuracy: float
    epochs: int
    learning_rate: float
    seed: int


def train_linear_probe(
    corpus: CorpusBundle,
    epochs: int,
    learning_rate: float,
    seed: int = 0,
) -> TrainedProbe:
    """Logistic regression on mean-pooled embeddings by full-batch gradient descent.

    The fitted mean-pool weights are rescaled by the sequence length so the
    returned bag model scores sequences identically to the trained probe.
    """
    labels = np.array([label for _, label in corpus.instances], dtype=np.float64)
    if not set(np.unique(labels)) <= {0.0, 1.0}:
        raise UnsupportedLabelsError("the linear probe only supports binary labels")
    if epochs < 0 or learning_rate < 0.0:
        raise ParameterError("epochs and learning rate must be non-negative")
    lengths = {len(seq) for seq, _ in corpus.instances}
    if len(lengths) != 1:
        raise ParameterError("probe training expects fixed-length sequences")
    length = lengths.pop()

    features = np.stack(
        [embed(corpus.table, seq).mean(axis=0) for seq, _ in corpus.instances]
    )
    count = features.shape[0]
    gen = philox_generator(seed, STREAM_PROBE)
    weights = 0.01 * _normals(gen, corpus.table.dimension)
    bias = 0.0
    for _ in range(epochs):
        residual = _vector_logistic(features @ weights + bias) - labels
        weights = weights - learning_rate * (features.T @ residual) / count
        bias = bias - learning_rate * float(residual.mean())

    model = ToyLinearBagModel(weights / length, bias)
    predictions = np.array(
        [1 if model.evaluate(embed(corpus.table, seq)).value >= 0.5 else 0 for seq, _ in corpus.instances]
    )
    accuracy = float((predictions == labels).mean())
    return TrainedProbe(
        model=model,
        train_accuracy=accuracy,
        epochs=epochs,
        learning_rate=learning_rate,
        seed=seed,
    )
