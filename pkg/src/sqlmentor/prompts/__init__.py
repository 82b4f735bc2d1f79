"""Versioned prompt templates, loaded verbatim from the package data files.

Templates use ``{placeholder}`` fields; ``render`` substitutes only the named
placeholders so literal braces elsewhere in a template survive untouched.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

TEMPLATE_NAMES = (
    "np_system_offline",
    "np_system_online",
    "generate_sql",
    "refine_sql",
    "p_system_offline",
    "p_system_online",
    "distill_no_feedback",
    "distill_with_feedback",
    "save_memory_instruction",
    "comm_spec",
    "hpa_reference",
    "hpa_feedback",
    "hpa_confirm",
    "hpa_leak_retry",
)


@lru_cache(maxsize=None)
def load(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown prompt template '{name}'")
    return (resources.files(__package__) / f"{name}.txt").read_text(encoding="utf-8")


def render(name: str, **fields: str) -> str:
    text = load(name)
    for key, value in fields.items():
        placeholder = "{" + key + "}"
        if placeholder not in text:
            raise KeyError(f"template '{name}' has no placeholder {placeholder}")
        text = text.replace(placeholder, value)
    return text
