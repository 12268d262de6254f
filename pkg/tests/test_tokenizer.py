from __future__ import annotations

import unicodedata

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spellkit.tokenizer import (
    BOS_ID,
    EOS_ID,
    MARKER_ID,
    PAD_ID,
    UNK_ID,
    TokenizerModel,
    train_subword,
)

# classic corpus with word counts chosen so the merge order is hand-checkable
CLASSIC = ["low"] * 5 + ["lower"] * 2 + ["newest"] * 6 + ["widest"] * 3


def classic_bpe(vocab=60):
    return train_subword(CLASSIC, "bpe", vocab)


def small_bbpe():
    corpus = ["the quick brown fox", "pack my box with jugs", "сказка про кота"]
    return train_subword(corpus, "bbpe", 400)


class TestTraining:
    def test_classic_first_merges(self):
        # hand-run of the pair counts: "es" wins with 9 (newest 6 + widest 3),
        # then "es"+"t" also 9; both beat every "lo"/"ow" pair at 7
        m = classic_bpe()
        got = [(m.tokens[l], m.tokens[r]) for l, r, _ in m.merges[:2]]
        assert got[0] == (b"e", b"s")
        assert got[1] == (b"es", b"t")

    def test_merge_creates_concatenated_token(self):
        m = classic_bpe()
        l, r, new = m.merges[0]
        assert m.tokens[new] == m.tokens[l] + m.tokens[r]

    def test_vocab_size_cap_respected(self):
        m = train_subword(CLASSIC, "bpe", 30)
        assert m.vocab_size <= 30

    def test_stops_when_no_pair_repeats(self):
        m = train_subword(["ab"], "bpe", 500)
        # single word occurring once: "a"+"b" has count 1, below the merge floor
        assert m.merges == []

    def test_bbpe_base_covers_all_bytes(self):
        m = train_subword(["abc"], "bbpe", 300)
        assert m.base_size() == 5 + 256

    def test_bpe_base_is_observed_chars(self):
        m = train_subword(["abc cba"], "bpe", 50)
        assert m.base_size() == 5 + 3

    def test_vocab_budget_must_exceed_base(self):
        with pytest.raises(ValueError):
            train_subword(["abc"], "bbpe", 200)

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ValueError):
            train_subword(["abc"], "char", 300)


class TestEncode:
    def test_special_ids_fixed(self):
        assert (PAD_ID, BOS_ID, EOS_ID, UNK_ID, MARKER_ID) == (0, 1, 2, 3, 4)

    def test_every_word_starts_with_marker(self):
        m = small_bbpe()
        ids = m.encode("quick fox")
        assert ids[0] == MARKER_ID or m.tokens[ids[0]].startswith(b" ")
        marker_count = sum(
            1 for t in ids if t == MARKER_ID or m.tokens[t].startswith(b" ")
        )
        assert marker_count == 2

    def test_no_cross_word_merges(self):
        # "st" straddling a word boundary must never fuse: the boundary marker
        # sits between the words and is never the right side of a merge
        m = train_subword(["best stew", "best stew", "best stew"], "bbpe", 300)
        for l, r, _ in m.merges:
            assert not m.tokens[r].startswith(b" ") or m.tokens[l] == b""

    def test_bpe_oov_char_maps_to_unk(self):
        m = classic_bpe()
        ids = m.encode("lowé")
        assert UNK_ID in ids

    def test_bbpe_never_oov(self):
        m = small_bbpe()
        ids = m.encode("日本語 emoji \U0001f600 mixed")
        assert UNK_ID not in ids

    def test_empty_string(self):
        m = small_bbpe()
        assert m.encode("") == []

    def test_nfc_normalization_applied(self):
        m = small_bbpe()
        decomposed = "étude"  # e + combining acute
        composed = unicodedata.normalize("NFC", decomposed)
        assert m.encode(decomposed) == m.encode(composed)


class TestDecode:
    def test_round_trip_simple(self):
        m = small_bbpe()
        for text in ("the quick brown fox", "pack my box", "сказка про кота"):
            out = m.decode(m.encode(text))
            assert out.text == text
            assert not out.lossy

    def test_specials_skipped(self):
        m = small_bbpe()
        ids = [BOS_ID] + m.encode("fox box") + [EOS_ID, PAD_ID, PAD_ID]
        assert m.decode(ids).text == "fox box"

    def test_whitespace_runs_collapse(self):
        m = small_bbpe()
        out = m.decode(m.encode("fox   box"))
        assert out.text == "fox box"

    def test_truncated_utf8_flagged_lossy(self):
        m = small_bbpe()
        # id of a lone continuation byte (0x80) in the bbpe base region
        out = m.decode([5 + 0x80])
        assert out.lossy

    @settings(max_examples=150, deadline=None)
    @given(
        st.lists(
            st.text(
                alphabet=st.characters(
                    whitelist_categories=("Ll", "Lu", "Nd"), max_codepoint=0x2FFF
                ),
                min_size=1,
                max_size=10,
            ),
            min_size=1,
            max_size=6,
        )
    )
    def test_bbpe_round_trip_property(self, words):
        text = unicodedata.normalize("NFC", " ".join(words))
        # canonical single-space form is what the round trip guarantees
        text = " ".join(text.split())
        if not text:
            return
        m = small_bbpe()
        out = m.decode(m.encode(text))
        assert out.text == text
        assert not out.lossy


class TestSaveLoad:
    def test_round_trip_preserves_encoding(self, tmp_path):
        m = small_bbpe()
        path = tmp_path / "tok.subword"
        m.save(path)
        back = TokenizerModel.load(path)
        assert back.scheme == m.scheme
        assert back.tokens == m.tokens
        assert back.merges == m.merges
        text = "jugs box квартира"
        assert back.encode(text) == m.encode(text)

    def test_header_validated(self, tmp_path):
        path = tmp_path / "bad.subword"
        path.write_text("wrong/v9 bbpe 10\n")
        with pytest.raises(ValueError):
            TokenizerModel.load(path)

    def test_merge_referencing_missing_id_rejected(self, tmp_path):
        m = small_bbpe()
        path = tmp_path / "tok.subword"
        m.save(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        lines.append(f"M 99999 4 {m.vocab_size}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(ValueError):
            TokenizerModel.load(path)
