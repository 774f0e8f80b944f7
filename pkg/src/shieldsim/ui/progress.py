"""
tqdm wrappers.  Bars go to stderr so CSV written to stdout stays clean;
``--quiet`` switches them off globally.
"""
from __future__ import annotations

import sys
from typing import Iterable, Optional, TypeVar

from tqdm import tqdm

T = TypeVar("T")

_enabled = True


def set_enabled(flag: bool) -> None:
    global _enabled
    _enabled = flag


def progress(iterable: Iterable[T], desc: str, unit: str = "it", total: Optional[int] = None) -> Iterable[T]:
    return tqdm(iterable, desc=desc, unit=unit, total=total, file=sys.stderr, disable=not _enabled, leave=False)


def counter(total: int, desc: str, unit: str = "it") -> tqdm:
    """Manual bar for work finishing out of order (thread pools)."""
    return tqdm(total=total, desc=desc, unit=unit, file=sys.stderr, disable=not _enabled, leave=False)
