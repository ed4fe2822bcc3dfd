"""Token sequences, embedding tables, and the embedding lookup.

An embedding matrix is a plain ``(n, m)`` float64 ndarray whose row ``i`` is
the embedding of token ``i`` of the sequence.  Token id 0 is reserved for the
MASK token, whose row is the all-zeros vector: occlusion, top-k masking, and
the perturbation scheme all rely on that convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError, UnknownTokenError

MASK_TOKEN_ID = 0


@dataclass(frozen=True)
class TokenSequence:
    """An ordered sequence of non-negative token ids."""

    tokens: tuple[int, ...]

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise ParameterError("a token sequence needs at least one token")
        if any((not isinstance(t, (int, np.integer))) or t < 0 for t in self.tokens):
            raise ParameterError("token ids must be non-negative integers")
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)


class EmbeddingTable:
    """Maps token ids to fixed-width float64 vectors.

    The MASK row is always present and always zero; supplying a non-zero
    vector for :data:`MASK_TOKEN_ID` is rejected.
    """

    def __init__(self, dimension: int, rows: dict[int, np.ndarray]):
        if dimension < 1:
            raise ParameterError("embedding dimension must be positive")
        self.dimension = int(dimension)
        self._rows: dict[int, np.ndarray] = {}
        for token_id, vec in rows.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dimension,):
                raise ShapeError(
                    f"row for token {token_id} has shape {arr.shape}, expected ({self.dimension},)"
                )
            if not np.all(np.isfinite(arr)):
                raise ParameterError(f"row for token {token_id} contains non-finite values")
            self._rows[int(token_id)] = arr.copy()
        mask = self._rows.setdefault(MASK_TOKEN_ID, np.zeros(self.dimension))
        if np.any(mask != 0.0):
            raise ParameterError("the MASK row must be all zeros")

    @property
    def vocab_size(self) -> int:
        return len(self._rows)

    @property
    def mask_row(self) -> np.ndarray:
        return np.zeros(self.dimension)

    def __contains__(self, token_id: int) -> bool:
        return int(token_id) in self._rows

    def row(self, token_id: int) -> np.ndarray:
        return self._rows[int(token_id)].copy()

    def token_ids(self) -> list[int]:
        return sorted(self._rows)

    def to_text(self) -> str:
        """Render as text: ``<vocab_size> <m>`` then one row per token."""
        lines = [f"{self.vocab_size} {self.dimension}"]
        for token_id in self.token_ids():
            values = " ".join(repr(float(v)) for v in self._rows[token_id])
            lines.append(f"{token_id}\t{values}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def parse(cls, text: str) -> "EmbeddingTable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ParameterError("embedding table text is empty")
        header = lines[0].split()
        if len(header) != 2:
            raise ParameterError("first line must be '<vocab_size> <m>'")
        vocab_size, dim = int(header[0]), int(header[1])
        rows: dict[int, np.ndarray] = {}
        for ln in lines[1:]:
            ident, _, rest = ln.partition("\t")
            rows[int(ident)] = np.array([float(v) for v in rest.split()], dtype=np.float64)
        if len(rows) != vocab_size:
            raise ParameterError(
                f"header declares {vocab_size} rows but file holds {len(rows)}"
            )
        return cls(dim, rows)

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingTable":
        return cls.parse(Path(path).read_text(encoding="utf-8"))


def embed(table: EmbeddingTable, seq: TokenSequence) -> np.ndarray:
    """Stack the table rows for ``seq`` into an ``(n, m)`` embedding matrix."""
    out = np.empty((len(seq), table.dimension))
    for i, token_id in enumerate(seq.tokens):
        if token_id not in table:
            raise UnknownTokenError(token_id, i)
        out[i] = table.row(token_id)
    return out


def as_embedding_matrix(value) -> np.ndarray:
    """Validate and return ``value`` as an ``(n, m)`` float64 matrix."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"embedding matrix must be 2-D and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("embedding matrix contains non-finite entries")
    return arr
