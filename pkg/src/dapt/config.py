"""Run configuration: defaults, flat config file, and flag precedence.

Config files are plain `key = value` lines mirroring the CLI flag names
(hyphens become underscores); `#` starts a comment. Flags override file
values, file values override defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

DEFAULT_TAU = 0.8
DEFAULT_TOP_K = 3
DEFAULT_MAX_REGEN = 2
DEFAULT_MODE = "full"
DEFAULT_JOBS = 4


@dataclass
class RunConfig:
    tau: float = DEFAULT_TAU
    top_k: int = DEFAULT_TOP_K
    max_regen: int = DEFAULT_MAX_REGEN
    mode: str = DEFAULT_MODE
    lang: str = "en"
    jobs: int = DEFAULT_JOBS
    out: str = "out"
    corpus_dir: str = "."
    dataset: str = "corpus"
    replay: str | None = None
    record: str | None = None
    chat_backend: str = "http"
    embed_backend: str = "http"
    prompts_dir: str | None = None
    node_cap: int = 12
    retries: int = 2

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_regen < 0:
            raise ValueError("max_regen must be >= 0")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def corpus_path(self, lang: str) -> Path:
        return Path(self.corpus_dir) / f"{self.dataset}.{lang}.jsonl"


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}

_INT_KEYS = {"top_k", "max_regen", "jobs", "node_cap", "retries"}
_FLOAT_KEYS = {"tau"}


def parse_config_file(path: str | Path) -> dict:
    """Read a flat key=value config file into typed values."""
    values: dict = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{line_no}: unknown config key {key!r}")
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        else:
            values[key] = value
    return values


def resolve_config(file_path: str | None, flag_values: dict) -> RunConfig:
    """Defaults, overridden by file values, overridden by explicit flags."""
    merged: dict = {}
    if file_path:
        merged.update(parse_config_file(file_path))
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    return RunConfig(**merged)
