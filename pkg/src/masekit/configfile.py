"""Benchmark configuration files: INI-style key/value text with sections.

Unknown sections or keys are rejected outright so typos cannot silently fall
back to defaults.  Semantic resolution (loading models, checking that every
referenced component exists) happens in :mod:`masekit.experiment` before any
model evaluation starts.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

KNOWN_EXPLAINER_METHODS = (
    "mase",
    "random",
    "lime",
    "kernel-shap",
    "permutation",
    "grad-l2",
    "occlusion",
)

_SECTION_KEYS: dict[str, set[str]] = {
    "model": {"file", "kind", "command", "tcp", "dim"},
    "data": {"table", "instances"},
    "corpus": {"vocab_size", "dim", "length", "instances", "rule", "planted"},
    "probe": {"epochs", "rate"},
    "perturbation": {"sigma", "samples", "style"},
    "evaluation": {"k", "seeds", "infidelity_samples", "literal_delta", "workers"},
    "explainers": {"names"},
    "output": {"path"},
}

_EXPLAINER_KEYS = {
    "method",
    "estimator",
    "sparse_l",
    "samples",
    "width",
    "penalty",
    "repeats",
    "background",
    "steps",
}


@dataclass(frozen=True)
class ExplainerConfig:
    name: str
    method: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RawConfig:
    """Parsed, schema-checked configuration; unresolved references."""

    base_dir: Path
    model: dict
    data: dict
    corpus: dict
    probe: dict
    perturbation: dict
    evaluation: dict
    explainers: list[ExplainerConfig]
    output_path: str
    text: str


def _parse_int_list(raw: str, context: str) -> list[int]:
    raw = raw.strip()
    if ".." in raw:
        lo_text, _, hi_text = raw.partition("..")
        try:
            lo, hi = int(lo_text), int(hi_text)
        except ValueError as exc:
            raise ConfigError(f"{context}: bad range {raw!r}") from exc
        if hi < lo:
            raise ConfigError(f"{context}: empty range {raw!r}")
        return list(range(lo, hi + 1))
    try:
        return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"{context}: bad integer list {raw!r}") from exc


_INT_KEYS = {
    ("model", "dim"),
    ("corpus", "vocab_size"),
    ("corpus", "dim"),
    ("corpus", "length"),
    ("corpus", "instances"),
    ("corpus", "planted"),
    ("probe", "epochs"),
    ("perturbation", "samples"),
    ("evaluation", "infidelity_samples"),
    ("evaluation", "workers"),
    ("explainer", "samples"),
    ("explainer", "repeats"),
    ("explainer", "background"),
    ("explainer", "steps"),
}
_FLOAT_KEYS = {
    ("perturbation", "sigma"),
    ("probe", "rate"),
    ("explainer", "sparse_l"),
    ("explainer", "width"),
    ("explainer", "penalty"),
}
_BOOL_KEYS = {("evaluation", "literal_delta")}


def _coerce(section: str, key: str, value: str):
    kind = "explainer" if section.startswith("explainer.") else section
    try:
        if (kind, key) in _INT_KEYS:
            return int(value)
        if (kind, key) in _FLOAT_KEYS:
            return float(value)
        if (kind, key) in _BOOL_KEYS:
            if value.lower() in ("true", "yes", "1"):
                return True
            if value.lower() in ("false", "no", "0"):
                return False
            raise ValueError(value)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {value!r}") from exc
    return value


def parse_config(text: str, base_dir: str | Path = ".") -> RawConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc

    sections: dict[str, dict] = {}
    explainer_sections: dict[str, dict] = {}
    for section in parser.sections():
        if section.startswith("explainer."):
            name = section[len("explainer."):]
            body = {}
            for key, value in parser.items(section):
                if key not in _EXPLAINER_KEYS:
                    raise ConfigError(f"[{section}] has unknown key {key!r}")
                body[key] = _coerce(section, key, value)
            explainer_sections[name] = body
            continue
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        body = {}
        for key, value in parser.items(section):
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"[{section}] has unknown key {key!r}")
            body[key] = _coerce(section, key, value)
        sections[section] = body

    model = sections.get("model", {})
    data = sections.get("data", {})
    corpus = sections.get("corpus", {})
    probe = sections.get("probe", {})

    synthetic = bool(corpus)
    if synthetic:
        if model or data:
            raise ConfigError("[corpus] mode cannot be combined with [model]/[data]")
        if not probe:
            raise ConfigError("[corpus] mode needs a [probe] section")
    else:
        if not model:
            raise ConfigError("config needs either [model]+[data] or [corpus]+[probe]")
        if not data:
            raise ConfigError("[model] mode needs a [data] section")
        kind = model.get("kind", "file")
        if kind not in ("file", "bridge"):
            raise ConfigError(f"[model] kind must be 'file' or 'bridge', got {kind!r}")
        if kind == "file" and "file" not in model:
            raise ConfigError("[model] kind 'file' needs a file path")
        if kind == "bridge":
            if not (bool(model.get("command")) ^ bool(model.get("tcp"))):
                raise ConfigError("[model] kind 'bridge' needs exactly one of command/tcp")
            if "dim" not in model:
                raise ConfigError("[model] kind 'bridge' needs dim")

    evaluation = dict(sections.get("evaluation", {}))
    evaluation["k"] = _parse_int_list(str(evaluation.get("k", "1,5,10,15")), "[evaluation] k")
    evaluation["seeds"] = _parse_int_list(str(evaluation.get("seeds", "0..19")), "[evaluation] seeds")
    evaluation.setdefault("infidelity_samples", 200)
    evaluation.setdefault("literal_delta", False)
    evaluation.setdefault("workers", 1)
    if evaluation["workers"] < 1:
        raise ConfigError("[evaluation] workers must be >= 1")
    if any(k < 1 for k in evaluation["k"]):
        raise ConfigError("[evaluation] k values must be >= 1")
    if not evaluation["seeds"]:
        raise ConfigError("[evaluation] seeds must be non-empty")

    names_raw = sections.get("explainers", {}).get("names", "mase,random")
    names = [n.strip() for n in str(names_raw).split(",") if n.strip()]
    if not names:
        raise ConfigError("[explainers] names must be non-empty")
    explainers = []
    for name in names:
        body = dict(explainer_sections.pop(name, {}))
        method = body.pop("method", name)
        if method not in KNOWN_EXPLAINER_METHODS:
            raise ConfigError(
                f"explainer {name!r}: unknown method {method!r} "
                f"(known: {', '.join(KNOWN_EXPLAINER_METHODS)})"
            )
        explainers.append(ExplainerConfig(name=name, method=method, params=body))
    if explainer_sections:
        orphan = ", ".join(sorted(explainer_sections))
        raise ConfigError(f"[explainer.*] sections without a matching name: {orphan}")

    output = sections.get("output", {})
    return RawConfig(
        base_dir=Path(base_dir),
        model=model,
        data=data,
        corpus=corpus,
        probe=probe,
        perturbation=sections.get("perturbation", {}),
        evaluation=evaluation,
        explainers=explainers,
        output_path=output.get("path", "report.csv"),
        text=text,
    )


def load_config(path: str | Path) -> RawConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def referenced_files(config: RawConfig) -> list[str]:
    """Relative paths the config depends on (for shipping to a service)."""
    out = []
    if config.model.get("file"):
        out.append(config.model["file"])
    if config.data.get("table"):
        out.append(config.data["table"])
    if config.data.get("instances"):
        out.append(config.data["instances"])
    return out
