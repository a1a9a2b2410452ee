"""Text cleaning pipeline and word tokenization.

The pipeline applies, in order: HTML tag removal, lowercasing, accent
folding, contraction expansion, and special-character removal. The result
contains only lowercase ASCII letters, digits, and single spaces, and
the pipeline is idempotent.
"""

from __future__ import annotations

import json
import re
import unicodedata
from importlib import resources

# Tags must open with a letter (optionally after /) so loose "a < b" text
# survives; comments are stripped as a unit.
_TAG_RE = re.compile(r"</?[A-Za-z][^<>]*>|<!--.*?-->", re.DOTALL)
_WS_RE = re.compile(r"\s+")
_NON_ALNUM_RE = re.compile(r"[^a-z0-9\s]")

# The five XML-predefined entities; anything fancier is out of scope.
_ENTITIES = (
    ("&lt;", "<"),
    ("&gt;", ">"),
    ("&quot;", '"'),
    ("&apos;", "'"),
    ("&amp;", "&"),
)


def _load_contractions() -> dict[str, str]:
    text = resources.files("hierdoc.data").joinpath("contractions.json").read_text("utf-8")
    return json.loads(text)


CONTRACTIONS: dict[str, str] = _load_contractions()

# Longest-first alternation so "can't've" wins over "can't". Apostrophes are
# part of the token, so plain \b is wrong at edges like "'cause".
_CONTRACTION_RE = re.compile(
    "(?<![a-z0-9'])("
    + "|".join(re.escape(k) for k in sorted(CONTRACTIONS, key=len, reverse=True))
    + ")(?![a-z0-9'])"
)


def strip_html(text: str) -> str:
    """Remove HTML tags and decode the five XML-predefined entities.

    Tags are replaced by a single space; an unclosed ``<`` is left verbatim.
    Entities are decoded after tag removal so escaped markup stays text.
    """
    text = _TAG_RE.sub(" ", text)
    for entity, char in _ENTITIES:
        text = text.replace(entity, char)
    return _WS_RE.sub(" ", text).strip()


def fold_accents(text: str) -> str:
    """Map accented characters to their ASCII base via NFKD decomposition."""
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(c for c in decomposed if not unicodedata.combining(c))


def expand_contractions(text: str) -> str:
    """Expand apostrophe contractions using the shipped table.

    Expects lowercase input (the table is stored lowercase). Curly
    apostrophes are normalized to ASCII first; matches are whole-token,
    longest-first.
    """
    text = text.replace("’", "'")
    return _CONTRACTION_RE.sub(lambda m: CONTRACTIONS[m.group(1)], text)


def remove_special_chars(text: str) -> str:
    """Replace every character outside [a-z0-9] and whitespace with a space,
    collapse whitespace runs, and trim."""
    text = _NON_ALNUM_RE.sub(" ", text)
    return _WS_RE.sub(" ", text).strip()


def preprocess(text: str) -> str:
    """Run the full cleaning pipeline; may return an empty string."""
    text = strip_html(text)
    text = text.lower()
    text = fold_accents(text)
    text = expand_contractions(text)
    return remove_special_chars(text)


def tokenize(clean: str) -> list[str]:
    """Split cleaned text on whitespace; never yields empty tokens."""
    return clean.split()
