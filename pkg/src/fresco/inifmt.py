"""Tiny INI-style reader for scene and run configs.

configparser cannot express repeated ``[sprite]`` sections, so scene files
use this reader instead: sections in order, ``key = value`` pairs, ``#`` or
``;`` comments, blank lines ignored. Keys before the first header go into
an implicit ``""`` section.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ContractError, FrescoIOError

Section = tuple[str, dict[str, str]]


def parse_sections(text: str) -> list[Section]:
    sections: list[Section] = [("", {})]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ContractError(f"line {lineno}: malformed section header {line!r}")
            sections.append((line[1:-1].strip(), {}))
            continue
        if "=" not in line:
            raise ContractError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        sections[-1][1][key.strip()] = value.split("#", 1)[0].split(";", 1)[0].strip()
    if not sections[0][1]:
        sections = sections[1:]
    return sections


def load_sections(path: str | Path) -> list[Section]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FrescoIOError(f"cannot read config file {path}: {exc}") from exc
    return parse_sections(text)
