import json

import pytest
from hypothesis import given, settings, strategies as st

from synadapt.corpus import (CorpusManifest, DatasetSplit, SourceSample, ingest_dir, load,
                             persist, split_corpus)
from synadapt.errors import FormatError, SynAdaptError


def _manifest(n):
    return CorpusManifest(tuple(SourceSample.from_text("python", f"x = {i}\n", f"f{i}.py")
                                for i in range(n)))


def test_empty_directory(tmp_path):
    m = ingest_dir(tmp_path)
    assert len(m) == 0 and m.skipped == 0


def test_single_java_file(tmp_path):
    (tmp_path / "a.java").write_text("class A { int f() { return 1 + 2; } }  //x\n")
    m = ingest_dir(tmp_path, {"java"})
    assert len(m) == 1 and m.samples[0].language == "java"


def test_extension_filter(tmp_path):
    (tmp_path / "a.py").write_text("x = 1\n")
    (tmp_path / "b.rb").write_text("puts 1\n")
    m = ingest_dir(tmp_path, {"python"})
    assert [s.path for s in m.samples] == ["a.py"]


def test_oversize_undecodable_and_duplicates(tmp_path):
    (tmp_path / "big.py").write_text("x" * 100)
    (tmp_path / "bad.py").write_bytes(b"\xff\xfe\x00")
    (tmp_path / "a.py").write_text("y = 2\n")
    (tmp_path / "b.py").write_text("y = 2\n")
    m = ingest_dir(tmp_path, max_bytes=50)
    assert [s.path for s in m.samples] == ["a.py"]
    assert m.skipped == 2


def test_unreadable_root(tmp_path):
    with pytest.raises(SynAdaptError):
        ingest_dir(tmp_path / "missing")


def test_ingestion_is_byte_identical(tmp_path, toy_manifest):
    from synadapt import toy_corpus_path
    a = persist(toy_manifest, tmp_path / "a.jsonl").read_bytes()
    b = persist(ingest_dir(toy_corpus_path()), tmp_path / "b.jsonl").read_bytes()
    assert a == b


def test_toy_corpus_counts(toy_manifest):
    assert toy_manifest.counts == {"go": 5, "java": 6, "javascript": 5, "python": 40, "ruby": 5}


@pytest.mark.parametrize("ratios,sizes", [((0.8, 0.1, 0.1), (8, 1, 1)),
                                          ((0.7, 0.15, 0.15), (8, 1, 1))])
def test_split_sizes(ratios, sizes):
    parts = split_corpus(_manifest(10), ratios, seed=7)
    assert tuple(len(p) for p in parts) == sizes
    assert split_corpus(_manifest(10), ratios, seed=7) == parts


def test_split_rejects_bad_input():
    with pytest.raises(ValueError):
        split_corpus(_manifest(10), (0.5, 0.2, 0.2))
    with pytest.raises(SynAdaptError):
        split_corpus(_manifest(2))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(3, 200), seed=st.integers(0, 2**64 - 1))
def test_split_partitions(n, seed):
    m = _manifest(n)
    parts = split_corpus(m, (0.8, 0.1, 0.1), seed)
    ids = [i for p in parts for i in p.ids]
    assert sorted(ids) == sorted(m.ids) and len(set(ids)) == n
    assert all(len(p) >= 1 for p in parts)


@pytest.mark.parametrize("n", [0, 3])
def test_manifest_round_trip(tmp_path, n):
    m = _manifest(n)
    assert load(persist(m, tmp_path / "m.jsonl")) == m


def test_split_round_trip(tmp_path):
    s = DatasetSplit("valid", ("a", "b"))
    assert load(persist(s, tmp_path / "s.jsonl")) == s


def test_hand_written_manifest(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("\n".join(json.dumps(o) for o in [
        {"format": "synadapt-corpus", "version": 1},
        {"id": "01", "lang": "python", "path": "a.py", "text": "a = 1\n"},
        {"id": "02", "lang": "go", "path": "b.go", "text": "package b\n"}]) + "\n")
    m = load(p)
    assert len(m) == 2 and m.samples[1].language == "go" and m.samples[0].text == "a = 1\n"


def test_load_errors_name_the_line(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text('{"format": "synadapt-corpus", "version": 1}\n{not json\n')
    with pytest.raises(FormatError, match=":2:"):
        load(p)
    p.write_text('{"format": "synadapt-corpus", "version": 9}\n')
    with pytest.raises(FormatError, match="version"):
        load(p)
