from __future__ import annotations

import json

import pytest

from spellkit.corpus import (
    Dataset,
    ExamplePair,
    Locale,
    Manifest,
    load_pairs,
    overlap_count,
    save_pairs,
    split,
)


def make_dataset(n=10, code="pt-BR"):
    loc = Locale.parse(code)
    pairs = [ExamplePair(f"inpt {i}", f"input {i}", loc) for i in range(n)]
    return Dataset(pairs, Manifest(source="test", counts={str(loc): n}))


class TestLocale:
    def test_parse_language_region(self):
        loc = Locale.parse("pt-BR")
        assert loc.language_code == "pt"
        assert loc.region_code == "BR"
        assert str(loc) == "pt-BR"

    def test_parse_language_only(self):
        loc = Locale.parse("nl")
        assert loc.language_code == "nl"
        assert loc.region_code is None
        assert str(loc) == "nl"

    def test_rejects_garbage(self):
        for bad in ("", "PT-br", "p!", "pt-", "pt-B", "a-BB-c"):
            with pytest.raises(ValueError):
                Locale.parse(bad)

    def test_equality_and_hash(self):
        assert Locale.parse("pl") == Locale.parse("pl")
        assert Locale.parse("pt-BR") != Locale.parse("pt-PT")
        assert len({Locale.parse("nl"), Locale.parse("nl")}) == 1


class TestExamplePair:
    def test_rejects_empty_sides(self):
        loc = Locale.parse("nl")
        with pytest.raises(ValueError):
            ExamplePair("", "label", loc)
        with pytest.raises(ValueError):
            ExamplePair("input", "", loc)

    def test_rejects_control_chars(self):
        loc = Locale.parse("nl")
        with pytest.raises(ValueError):
            ExamplePair("bad\x00text", "label", loc)
        with pytest.raises(ValueError):
            ExamplePair("ok", "bad\ntext", loc)


class TestDataset:
    def test_counts_must_match(self):
        loc = Locale.parse("nl")
        pairs = [ExamplePair("a b", "a b", loc)]
        with pytest.raises(ValueError):
            Dataset(pairs, Manifest(source="x", counts={"nl": 2}))

    def test_locales_sorted(self):
        pa = ExamplePair("a", "a", Locale.parse("pt-BR"))
        pb = ExamplePair("b", "b", Locale.parse("nl"))
        ds = Dataset([pa, pb], Manifest(source="x", counts={"pt-BR": 1, "nl": 1}))
        assert [str(l) for l in ds.locales()] == ["nl", "pt-BR"]


class TestRoundTrip:
    @pytest.mark.parametrize("fmt", ["jsonl", "tsv"])
    def test_save_load_identity(self, tmp_path, fmt):
        ds = make_dataset(12)
        path = tmp_path / f"data.{fmt}"
        save_pairs(ds, path)
        back = load_pairs(path)
        assert [(p.input, p.label, str(p.locale)) for p in back.pairs] == [
            (p.input, p.label, str(p.locale)) for p in ds.pairs
        ]
        assert back.manifest.counts == ds.manifest.counts

    def test_manifest_sidecar_written(self, tmp_path):
        ds = make_dataset(3)
        path = tmp_path / "data.jsonl"
        save_pairs(ds, path)
        side = json.loads((tmp_path / "data.jsonl.manifest.json").read_text())
        assert side["counts"] == {"pt-BR": 3}

    def test_malformed_line_reports_lineno(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = json.dumps({"input": "a b", "label": "a b", "locale": "nl"})
        path.write_text(good + "\nnot json\n")
        with pytest.raises(ValueError, match="line 2"):
            load_pairs(path)

    def test_tab_rejected_at_construction(self):
        # tabs are control characters, so tsv rows can never be corrupted
        with pytest.raises(ValueError):
            ExamplePair("has\ttab", "x", Locale.parse("nl"))


class TestSplit:
    def test_partition_is_exact(self):
        ds = make_dataset(100)
        train, ev = split(ds, eval_fraction=0.2, seed=1)
        assert len(train) == 80 and len(ev) == 20
        key = lambda p: (p.input, p.label)
        all_back = sorted(map(key, train.pairs + ev.pairs))
        assert all_back == sorted(map(key, ds.pairs))
        assert overlap_count(train, ev) == 0

    def test_split_deterministic(self):
        ds = make_dataset(50)
        a1, b1 = split(ds, 0.3, seed=9)
        a2, b2 = split(ds, 0.3, seed=9)
        assert [p.input for p in a1.pairs] == [p.input for p in a2.pairs]
        assert [p.input for p in b1.pairs] == [p.input for p in b2.pairs]

    def test_different_seed_different_split(self):
        ds = make_dataset(50)
        _, b1 = split(ds, 0.3, seed=1)
        _, b2 = split(ds, 0.3, seed=2)
        assert {p.input for p in b1.pairs} != {p.input for p in b2.pairs}

    def test_bad_fraction(self):
        ds = make_dataset(10)
        for frac in (-0.1, 0.0, 1.0, 1.5):
            with pytest.raises(ValueError):
                split(ds, frac, seed=0)


def test_overlap_count_counts_shared_labels():
    loc = Locale.parse("nl")
    a = Dataset(
        [ExamplePair("x y", "x y", loc), ExamplePair("p w", "p q", loc)],
        Manifest(source="a", counts={"nl": 2}),
    )
    b = Dataset(
        [ExamplePair("p qq", "p q", loc), ExamplePair("z", "z z", loc)],
        Manifest(source="b", counts={"nl": 2}),
    )
    # one eval label ("p q") leaks from train, the other is clean
    assert overlap_count(a, b) == 1
