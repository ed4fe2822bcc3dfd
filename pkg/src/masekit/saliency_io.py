"""Saliency serialization: CSV with a key/value header, and an HTML heatmap."""

from __future__ import annotations

import html
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .estimators import Saliency

_HEADER_FIELDS = ("method", "samples", "sigma", "L", "seed", "base_score")


def saliency_to_csv(saliency: Saliency, token_ids: list[int] | None = None) -> str:
    """Render scores as ``token_index,token_id,score`` rows under a header.

    Header lines are ``# key = value``; absent hyperparameters render as
    empty values so the header layout is stable across methods.
    """
    n = len(saliency)
    if token_ids is None:
        token_ids = list(range(n))
    if len(token_ids) != n:
        raise ParameterError("token id list must match the score length")
    hyper = saliency.hyperparameters
    values = {
        "method": saliency.method,
        "samples": "" if saliency.sample_count is None else saliency.sample_count,
        "sigma": hyper.get("sigma", ""),
        "L": hyper.get("L", ""),
        "seed": hyper.get("seed", ""),
        "base_score": "" if saliency.base_score is None else repr(saliency.base_score),
    }
    lines = [f"# {key} = {values[key]}" for key in _HEADER_FIELDS]
    for key in sorted(hyper):
        if key in ("sigma", "L", "seed"):
            continue
        lines.append(f"# {key} = {hyper[key]}")
    for warning in saliency.warnings:
        lines.append(f"# warning = {warning}")
    lines.append("token_index,token_id,score")
    for index, (token_id, score) in enumerate(zip(token_ids, saliency.scores)):
        lines.append(f"{index},{token_id},{float(score)!r}")
    return "\n".join(lines) + "\n"


def save_saliency(saliency: Saliency, path: str | Path, token_ids: list[int] | None = None) -> None:
    Path(path).write_text(saliency_to_csv(saliency, token_ids), encoding="utf-8")


def load_saliency(path: str | Path) -> tuple[Saliency, list[int]]:
    header: dict[str, str] = {}
    scores: list[float] = []
    token_ids: list[int] = []
    warnings: list[str] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                key = key.strip()
                if key == "warning":
                    warnings.append(value.strip())
                else:
                    header[key] = value.strip()
            continue
        if line.startswith("token_index"):
            continue
        _, token_id, score = line.split(",")
        token_ids.append(int(token_id))
        scores.append(float(score))
    hyper = {}
    for key in ("sigma", "L", "seed"):
        if header.get(key):
            hyper[key] = float(header[key]) if key != "seed" else int(float(header[key]))
    saliency = Saliency(
        scores=np.array(scores),
        method=header.get("method", "unknown"),
        sample_count=int(header["samples"]) if header.get("samples") else None,
        hyperparameters=hyper,
        base_score=float(header["base_score"]) if header.get("base_score") else None,
        warnings=tuple(warnings),
    )
    return saliency, token_ids


def saliency_to_html(saliency: Saliency, token_labels: list[str] | None = None) -> str:
    """A standalone HTML fragment: one span per token, colored by score.

    Positive scores shade red, negative shade blue, intensity scaled by the
    largest absolute score.
    """
    n = len(saliency)
    if token_labels is None:
        token_labels = [f"t{index}" for index in range(n)]
    if len(token_labels) != n:
        raise ParameterError("token label list must match the score length")
    peak = float(np.max(np.abs(saliency.scores))) if n else 0.0
    spans = []
    for label, score in zip(token_labels, saliency.scores):
        intensity = 0.0 if peak == 0.0 else abs(float(score)) / peak
        color = "255,80,80" if score >= 0 else "80,120,255"
        spans.append(
            f'<span title="{float(score):+.6g}" '
            f'style="background: rgba({color},{intensity:.3f}); '
            f'padding: 1px 3px; margin: 1px; border-radius: 3px;">'
            f"{html.escape(label)}</span>"
        )
    return (
        f'<div class="saliency-heatmap" data-method="{html.escape(saliency.method)}">'
        + "".join(spans)
        + "</div>\n"
    )
