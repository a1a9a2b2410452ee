"""Cleaning-pipeline tests: per-step units, the byte-exact golden suite,
and pipeline properties (idempotence, output alphabet)."""

from __future__ import annotations

import re

from hierdoc.textprep import (
    expand_contractions,
    fold_accents,
    preprocess,
    remove_special_chars,
    strip_html,
    tokenize,
)

from preprocessing_goldens import GOLDEN


def test_golden_suite_byte_exact():
    assert len(GOLDEN) >= 20
    for raw, expected in GOLDEN:
        assert preprocess(raw) == expected, f"mismatch for {raw!r}"


def test_preprocess_idempotent():
    for raw, _ in GOLDEN:
        once = preprocess(raw)
        assert preprocess(once) == once


def test_output_alphabet():
    pattern = re.compile(r"^[a-z0-9]+( [a-z0-9]+)*$")
    for raw, _ in GOLDEN:
        out = preprocess(raw)
        assert out == "" or pattern.match(out), f"bad alphabet: {out!r}"


def test_strip_html_keeps_unclosed_angle():
    assert strip_html("a < b") == "a < b"
    assert strip_html("x <unclosed") == "x <unclosed"


def test_strip_html_decodes_entities_after_tags():
    # escaped markup must survive as text, not get re-stripped
    assert strip_html("&lt;p&gt;kept&lt;/p&gt;") == "<p>kept</p>"


def test_strip_html_comment_with_markup_inside():
    assert strip_html("a<!-- <b>x</b> -->b") == "a b"


def test_fold_accents():
    assert fold_accents("éèêë") == "eeee"
    assert fold_accents("plain") == "plain"
    assert fold_accents("ñoño") == "nono"


def test_expand_contractions_whole_token_only():
    # "shell" contains "he'll" if boundaries were sloppy
    assert expand_contractions("shell") == "shell"
    assert expand_contractions("he'll") == "he will"
    # longest-first: "can't've" must not stop at "can't"
    assert expand_contractions("can't've") == "cannot have"


def test_expand_contractions_possessive_untouched():
    assert expand_contractions("smith's") == "smith's"


def test_remove_special_chars():
    assert remove_special_chars("a-b_c") == "a b c"
    assert remove_special_chars("  spaced  out  ") == "spaced out"
    assert remove_special_chars("***") == ""


def test_tokenize():
    assert tokenize("a b  c") == ["a", "b", "c"]
    assert tokenize("") == []
    assert tokenize("one") == ["one"]
