"""Fuzzy hashing: reference equivalence, scoring behavior, canonicalization."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import _levenshtein2, fuzzy_compare_ref, fuzzy_hash_ref
from rulemine import ctph

FIG_RULE = """rule Time_Wasting_Virus_TW1_2025 {
    meta:
        description = "Detects the Time-Wasting Virus"
        author = "Anonymous Author"
        threat_level = "Critical (for productivity)"
    strings:
        $later = "I'll fix it later"
        $cat = "youtu.be/shorts/"
        $coffee = "Just one more coffee"
    condition:
        any of them
}
"""


class TestHashing:
    def test_deterministic(self):
        data = b"the quick brown fox jumps over the lazy dog" * 40
        assert ctph.hash_bytes(data) == ctph.hash_bytes(data)

    def test_empty_input_minimal_signature(self):
        sig = ctph.hash_bytes(b"")
        assert sig.blocksize == 3
        assert sig.sig1 == "" and sig.sig2 == ""
        assert sig.serialize() == "3::"

    def test_repeated_byte_matches_reference(self):
        data = b"A" * 4096
        assert ctph.hash_bytes(data).serialize() == fuzzy_hash_ref(data)

    def test_canonical_example_rule_matches_reference(self):
        text = ctph.canonicalize(FIG_RULE, ctph.MODE_FULL).text
        data = text.encode()
        assert ctph.hash_bytes(data).serialize() == fuzzy_hash_ref(data)

    def test_trailing_zeros_edge(self):
        for data in (b"A" * 100 + b"\x00" * 10, b"\x00" * 300, b"xy" + b"\x00" * 7):
            assert ctph.hash_bytes(data).serialize() == fuzzy_hash_ref(data)

    def test_random_corpus_matches_reference(self):
        rng = random.Random(1234)
        for _ in range(150):
            n = int(64 * (65536 / 64) ** rng.random())
            data = rng.randbytes(n)
            assert ctph.hash_bytes(data).serialize() == fuzzy_hash_ref(data)

    def test_block_key_is_prefix(self):
        sig = ctph.hash_bytes(b"some moderately sized buffer " * 30)
        assert sig.sig1.startswith(sig.block_key)
        assert len(sig.block_key) <= 24

    def test_serialize_roundtrip(self):
        sig = ctph.hash_bytes(b"roundtrip me please, fuzzy hasher" * 11)
        assert ctph.FuzzySignature.parse(sig.serialize()) == sig


class TestSimilarity:
    def test_self_similarity_is_100(self):
        rng = random.Random(5)
        for n in (10, 64, 300, 5000):
            sig = ctph.hash_bytes(rng.randbytes(n))
            assert ctph.similarity(sig, sig) == 100

    def test_unrelated_buffers_score_zero(self):
        rng = random.Random(99)
        a = ctph.hash_bytes(rng.randbytes(4096))
        b = ctph.hash_bytes(rng.randbytes(4096))
        assert ctph.similarity(a, b) == fuzzy_compare_ref(a.serialize(), b.serialize()) == 0

    def test_renamed_variable_scores_high(self):
        base = ctph.canonicalize(FIG_RULE, ctph.MODE_FULL).text * 3
        variant = base.replace("$later", "$delay")
        a, b = ctph.hash_text(base), ctph.hash_text(variant)
        score = ctph.similarity(a, b)
        assert score == fuzzy_compare_ref(a.serialize(), b.serialize())
        assert score >= 65

    def test_incompatible_blocksizes_score_zero(self):
        a = ctph.FuzzySignature(3, "abcdefghijkl", "abcdef")
        b = ctph.FuzzySignature(48, "abcdefghijkl", "abcdef")
        assert ctph.similarity(a, b) == 0

    def test_malformed_signature_raises(self):
        with pytest.raises(ValueError):
            ctph.compare("not a signature", "3:abc:de")

    def test_pairwise_matches_reference(self):
        rng = random.Random(777)
        sigs = [ctph.hash_bytes(rng.randbytes(rng.randrange(64, 8192))) for _ in range(40)]
        for i, a in enumerate(sigs):
            for b in sigs[i:]:
                assert ctph.similarity(a, b) == fuzzy_compare_ref(a.serialize(), b.serialize())

    @given(st.binary(min_size=64, max_size=2048), st.binary(min_size=64, max_size=2048))
    @settings(max_examples=60, deadline=None)
    def test_symmetry(self, x, y):
        a, b = ctph.hash_bytes(x), ctph.hash_bytes(y)
        assert ctph.similarity(a, b) == ctph.similarity(b, a)

    @given(
        st.text(alphabet=ctph._B64, max_size=64),
        st.text(alphabet=ctph._B64, max_size=64),
    )
    @settings(max_examples=300, deadline=None)
    def test_edit_distance_equals_dp(self, s1, s2):
        assert ctph._edit_distance(s1, s2) == _levenshtein2(s1, s2)


class TestCanonicalize:
    def test_comments_and_tabs_removed(self):
        noisy = "rule x {\n\t/* note */ strings: // inline\n\t\t$a = \"v\"\n condition: $a }"
        clean = 'rule x { strings: $a = "v" condition: $a }'
        assert ctph.canonicalize(noisy, ctph.MODE_FULL).text == \
            ctph.canonicalize(clean, ctph.MODE_FULL).text

    def test_logic_only_drops_meta(self):
        canon = ctph.canonicalize(FIG_RULE, ctph.MODE_LOGIC_ONLY).text
        assert "$later" in canon
        assert "Anonymous Author" not in canon
        assert "meta" not in canon

    def test_meta_only_difference_vanishes_in_logic_mode(self):
        other = FIG_RULE.replace("Anonymous Author", "Somebody Else")
        assert ctph.canonicalize(FIG_RULE, ctph.MODE_LOGIC_ONLY) == \
            ctph.canonicalize(other, ctph.MODE_LOGIC_ONLY)

    def test_idempotent(self):
        for mode in (ctph.MODE_FULL, ctph.MODE_LOGIC_ONLY):
            once = ctph.canonicalize(FIG_RULE, mode)
            again = ctph.canonicalize(once.text, mode)
            assert again.text == once.text

    def test_appending_comment_never_changes_hash(self):
        base = ctph.hash_rule(FIG_RULE, ctph.MODE_FULL)
        with_comment = FIG_RULE + "\n// reviewed by the weekly triage\n"
        assert ctph.hash_rule(with_comment, ctph.MODE_FULL) == base

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            ctph.canonicalize(FIG_RULE, "lowercase")

    def test_string_contents_protected_from_comment_stripping(self):
        rule = 'rule u { strings: $u = "http://x/y" condition: $u }'
        assert "http://x/y" in ctph.canonicalize(rule, ctph.MODE_FULL).text
