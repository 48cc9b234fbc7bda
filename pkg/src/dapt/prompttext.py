"""Versioned prompt templates.

Templates live as UTF-8 text files named `<stage>.<version>.txt`, either
packaged with the library or in a caller-supplied directory. Placeholders use
`$name` syntax so literal JSON braces in the prompt body need no escaping.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from pathlib import Path
from string import Template

DEFAULT_VERSION = "v1"


@lru_cache(maxsize=None)
def _read(name: str, version: str, prompts_dir: str | None) -> Template:
    filename = f"{name}.{version}.txt"
    if prompts_dir is not None:
        text = (Path(prompts_dir) / filename).read_text(encoding="utf-8")
    else:
        text = (resources.files("dapt") / "prompts" / filename).read_text(encoding="utf-8")
    return Template(text)


def render_prompt(name: str, *, version: str = DEFAULT_VERSION,
                  prompts_dir: str | None = None, **fields: str) -> str:
    return _read(name, version, prompts_dir).substitute(**fields).strip()
