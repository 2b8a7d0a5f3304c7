"""Keyword extraction used to name categories without a language model."""

from __future__ import annotations

import re
from collections import Counter
from typing import Iterable

STOPWORDS = frozenset(
    """a an and are as at be by can for from has have in into is it its of on or that the this to
    with without your you user users via using use based about over per any all also will which
    their them they then than these those such other more most some what when where who how
    agent agents service services tool tools""".split()
)

_TOKEN = re.compile(r"[a-z][a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.findall(text.lower()) if t not in STOPWORDS]


def top_keywords(texts: Iterable[str], n: int = 3) -> list[str]:
    """Most frequent content words across ``texts``; ties alphabetical."""
    counts = Counter()
    for t in texts:
        counts.update(tokenize(t))
    return [w for w, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n]]
