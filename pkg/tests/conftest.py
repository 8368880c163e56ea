import pytest
import torch

from synadapt import toy_corpus_path
from synadapt.corpus import ingest_dir
from synadapt.syntax import label_corpus
from synadapt.tokenizer import train_bpe


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy_manifest():
    return ingest_dir(toy_corpus_path())


@pytest.fixture(scope="session")
def toy_labeled(toy_manifest):
    return label_corpus(list(toy_manifest.samples))


@pytest.fixture(scope="session")
def toy_bpe(toy_labeled):
    labeled, _ = toy_labeled
    return train_bpe([w.text for s in labeled for w in s.words], vocab_size=600)


@pytest.fixture(scope="session")
def tiny_data(toy_labeled, toy_bpe):
    """Short windows from the toy Python files plus a tiny encoder config."""
    from synadapt.core import EncoderConfig
    from synadapt.tokenizer import encode_windows
    labeled, vocab = toy_labeled
    seqs = [w for s in labeled if s.language == "python" for w in encode_windows(s, toy_bpe, 32)]
    cfg = EncoderConfig(vocab_size=toy_bpe.vocab_size, hidden=16, layers=2, heads=2, ffn=32,
                        max_len=32, dropout=0.1)
    return cfg, vocab, seqs


_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """``criterion(n, passed, detail)`` records one acceptance line and returns ``passed``."""
    def record(n: int, passed: bool, detail: str) -> bool:
        _CRITERIA[n] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
