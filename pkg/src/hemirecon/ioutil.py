"""Atomic text-file writing and deterministic number formatting."""

from __future__ import annotations

import os


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a sibling temp file and rename into place."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def fnum(x) -> str:
    """Shortest round-trip decimal form of a scalar (numpy included)."""
    return repr(float(x))
