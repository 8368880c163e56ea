"""Source-file ingestion, deterministic splitting, and JSONL persistence."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import FormatError, SynAdaptError
from .rng import Xoshiro256

log = logging.getLogger(__name__)

LANGUAGES = ("go", "java", "javascript", "python", "ruby")
EXTENSIONS = {".go": "go", ".java": "java", ".js": "javascript", ".py": "python", ".rb": "ruby"}
DEFAULT_MAX_BYTES = 65536
SPLIT_NAMES = ("train", "valid", "test")

CORPUS_FORMAT = "synadapt-corpus"
SPLIT_FORMAT = "synadapt-split"
FORMAT_VERSION = 1


def sample_id(language: str, text: str) -> str:
    """Stable 64-bit content hash of ``(language, text)`` as 16 hex digits."""
    h = hashlib.blake2b(digest_size=8)
    h.update(language.encode("ascii"))
    h.update(b"\0")
    h.update(text.encode("utf-8"))
    return h.hexdigest()


@dataclass(frozen=True)
class SourceSample:
    id: str
    language: str
    path: str
    text: str

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise ValueError(f"unsupported language {self.language!r}")
        if not self.text:
            raise ValueError(f"empty sample text ({self.path})")

    @classmethod
    def from_text(cls, language: str, text: str, path: str = "<memory>") -> "SourceSample":
        return cls(sample_id(language, text), language, path, text)


@dataclass(frozen=True)
class CorpusManifest:
    samples: tuple[SourceSample, ...] = ()
    skipped: int = 0

    def __post_init__(self):
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sample ids in manifest")

    @property
    def counts(self) -> dict[str, int]:
        out = {lang: 0 for lang in LANGUAGES}
        for s in self.samples:
            out[s.language] += 1
        return out

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def by_id(self) -> dict[str, SourceSample]:
        return {s.id: s for s in self.samples}

    def select(self, ids: Iterable[str]) -> list[SourceSample]:
        table = self.by_id()
        return [table[i] for i in ids]

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    ids: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.name not in SPLIT_NAMES:
            raise ValueError(f"unknown split name {self.name!r}")

    def __len__(self):
        return len(self.ids)


def ingest_dir(root, languages: Iterable[str] = LANGUAGES,
               max_bytes: int = DEFAULT_MAX_BYTES) -> CorpusManifest:
    """Collect every matching source file under ``root`` in lexicographic path order.

    Files larger than ``max_bytes`` are ignored; files that are not valid UTF-8
    (or empty, or exact duplicates of an earlier file) are counted in
    ``manifest.skipped``.
    """
    root = Path(root)
    if max_bytes <= 0:
        raise ValueError("max_bytes must be positive")
    wanted = set(languages)
    unknown = wanted - set(LANGUAGES)
    if unknown:
        raise SynAdaptError(f"unsupported languages: {sorted(unknown)}")
    if not root.is_dir() or not os.access(root, os.R_OK | os.X_OK):
        raise SynAdaptError(f"cannot read corpus root {root}")

    paths = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in filenames:
            p = Path(dirpath) / name
            lang = EXTENSIONS.get(p.suffix)
            if lang in wanted and p.is_file() and not p.is_symlink():
                paths.append((p.relative_to(root).as_posix(), p, lang))
    paths.sort(key=lambda t: t[0])

    samples, seen, skipped = [], set(), 0
    for rel, p, lang in paths:
        if p.stat().st_size > max_bytes:
            continue
        try:
            text = p.read_bytes().decode("utf-8")
        except UnicodeDecodeError:
            log.warning("skipping undecodable file %s", rel)
            skipped += 1
            continue
        if not text:
            skipped += 1
            continue
        s = SourceSample.from_text(lang, text, rel)
        if s.id in seen:
            skipped += 1
            continue
        seen.add(s.id)
        samples.append(s)
    return CorpusManifest(tuple(samples), skipped)


def split_corpus(manifest: CorpusManifest, ratios: Sequence[float] = (0.8, 0.1, 0.1),
                 seed: int = 0) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
    """Shuffle with xoshiro256** and cut into train/valid/test.

    valid and test get ``floor(n * ratio)`` samples (at least one each), train
    takes the remainder.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive fractions summing to 1, got {ratios}")
    n = len(manifest)
    if n < 3:
        raise SynAdaptError(f"need at least 3 samples to populate all splits, have {n}")
    ids = manifest.ids
    Xoshiro256(seed).shuffle(ids)
    n_valid = max(1, int(n * ratios[1] + 1e-9))
    n_test = max(1, int(n * ratios[2] + 1e-9))
    n_train = n - n_valid - n_test
    if n_train < 1:
        raise SynAdaptError(f"ratios {ratios} leave no training samples out of {n}")
    return (DatasetSplit("train", tuple(ids[:n_train])),
            DatasetSplit("valid", tuple(ids[n_train:n_train + n_valid])),
            DatasetSplit("test", tuple(ids[n_train + n_valid:])))


def _read_jsonl(path) -> tuple[dict, list[tuple[int, dict]]]:
    header, records = None, []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: expected a JSON object")
            if header is None:
                header = obj
            else:
                records.append((lineno, obj))
    if header is None:
        raise FormatError(f"{path}: missing header line")
    return header, records


def _check_header(path, header: dict, fmt: str) -> None:
    if header.get("format") != fmt:
        raise FormatError(f"{path}: expected format {fmt!r}, got {header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {header.get('version')!r} "
                          f"(expected {FORMAT_VERSION})")


def persist(artifact, path) -> Path:
    """Write a manifest or split as JSON Lines (header line first)."""
    path = Path(path)
    if isinstance(artifact, CorpusManifest):
        header = {"format": CORPUS_FORMAT, "version": FORMAT_VERSION}
        if artifact.skipped:
            header["skipped"] = artifact.skipped
        rows = [{"id": s.id, "lang": s.language, "path": s.path, "text": s.text}
                for s in artifact.samples]
    elif isinstance(artifact, DatasetSplit):
        header = {"format": SPLIT_FORMAT, "version": FORMAT_VERSION, "name": artifact.name}
        rows = [{"id": i} for i in artifact.ids]
    else:
        raise TypeError(f"cannot persist {type(artifact).__name__}")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for obj in [header, *rows]:
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    os.replace(tmp, path)
    return path


def load(path) -> CorpusManifest | DatasetSplit:
    header, records = _read_jsonl(path)
    fmt = header.get("format")
    if fmt == SPLIT_FORMAT:
        _check_header(path, header, SPLIT_FORMAT)
        ids = []
        for lineno, rec in records:
            if not isinstance(rec.get("id"), str):
                raise FormatError(f"{path}:{lineno}: split record needs a string 'id'")
            ids.append(rec["id"])
        return DatasetSplit(header.get("name"), tuple(ids))
    _check_header(path, header, CORPUS_FORMAT)
    samples = []
    for lineno, rec in records:
        try:
            s = SourceSample(rec["id"], rec["lang"], rec["path"], rec["text"])
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{path}:{lineno}: bad sample record ({e})") from None
        samples.append(s)
    try:
        return CorpusManifest(tuple(samples), int(header.get("skipped", 0)))
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None
