"""AST leaf extraction with tree-sitter and the token-type vocabulary.

Leaves are tree-sitter nodes with zero children; their grammar type names
(``identifier``, ``(``, ``string_content``, ...) form the label space for
token-type classification.
"""

from __future__ import annotations

import ctypes
import json
import os
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import tree_sitter

from .corpus import SourceSample
from .errors import ConfigError, FormatError, SynAdaptError

IGNORE = -100
ERROR_TYPE = "ERROR"
MAX_ERROR_FRACTION = 0.20
GRAMMAR_DIR_ENV = "SYNADAPT_GRAMMAR_DIR"

_GRAMMAR_MODULES = {
    "go": "tree_sitter_go",
    "java": "tree_sitter_java",
    "javascript": "tree_sitter_javascript",
    "python": "tree_sitter_python",
    "ruby": "tree_sitter_ruby",
}


def _load_from_dir(language: str, directory: str) -> tree_sitter.Language:
    for suffix in (".so", ".dylib", ".dll"):
        lib = Path(directory) / f"{language}{suffix}"
        if lib.exists():
            handle = ctypes.cdll.LoadLibrary(str(lib))
            fn = getattr(handle, f"tree_sitter_{language}")
            fn.restype = ctypes.c_void_p
            return tree_sitter.Language(fn())
    raise ConfigError(f"no grammar object for {language!r} in {directory}")


@lru_cache(maxsize=None)
def grammar(language: str) -> tree_sitter.Language:
    """Grammar for ``language``; ``$SYNADAPT_GRAMMAR_DIR/<lang>.so`` wins over the bundled wheel."""
    if language not in _GRAMMAR_MODULES:
        raise ConfigError(f"no grammar registered for language {language!r}")
    directory = os.environ.get(GRAMMAR_DIR_ENV)
    if directory:
        return _load_from_dir(language, directory)
    try:
        module = __import__(_GRAMMAR_MODULES[language])
    except ImportError as e:
        raise ConfigError(f"grammar package for {language!r} is not installed: {e}") from None
    return tree_sitter.Language(module.language())


def parse_source(sample: SourceSample | tuple[str, str]) -> tree_sitter.Tree:
    """Parse a sample (or a ``(language, text)`` pair). Never fails on bad syntax."""
    language, text = (sample.language, sample.text) if isinstance(sample, SourceSample) else sample
    # Parsers are cheap; a fresh one keeps the tree confined to this call's thread.
    parser = tree_sitter.Parser(grammar(language))
    return parser.parse(text.encode("utf-8"))


@dataclass(frozen=True)
class AstLeaf:
    start: int
    end: int
    type_name: str
    text: str

    @property
    def byte_span(self) -> tuple[int, int]:
        return (self.start, self.end)


def extract_leaves(tree: tree_sitter.Tree, text: str | bytes) -> list[AstLeaf]:
    """Depth-first, left-to-right leaves of ``tree``; zero-width leaves are dropped."""
    data = text.encode("utf-8") if isinstance(text, str) else text
    leaves = []
    stack = [tree.root_node]
    while stack:
        node = stack.pop()
        if node.child_count:
            stack.extend(reversed(node.children))
            continue
        start, end = node.start_byte, node.end_byte
        if end <= start:
            continue
        if leaves and start < leaves[-1].end:
            # overlapping leaves would break the span contract; tree-sitter does not emit them
            raise AssertionError(f"overlapping leaves at byte {start}")
        leaves.append(AstLeaf(start, end, node.type, data[start:end].decode("utf-8", "replace")))
    return leaves


def error_bytes(tree: tree_sitter.Tree) -> int:
    """Number of bytes covered by ERROR nodes (outermost ones only)."""
    total = 0
    stack = [tree.root_node]
    while stack:
        node = stack.pop()
        if node.type == ERROR_TYPE:
            total += node.end_byte - node.start_byte
        elif node.has_error:
            stack.extend(node.children)
    return total


class TypeVocab:
    """Dense ids for leaf type names: most frequent first, ties by name."""

    ignore_id = IGNORE

    def __init__(self, names: Sequence[str], counts: dict[str, int] | None = None):
        if len(set(names)) != len(names):
            raise ValueError("duplicate type names")
        self.names = list(names)
        self.ids = {n: i for i, n in enumerate(self.names)}
        self.counts = dict(counts or {})

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self.ids

    def id(self, name: str) -> int:
        return self.ids.get(name, IGNORE)

    def name(self, type_id: int) -> str:
        if type_id == IGNORE:
            return "<ignore>"
        return self.names[type_id]

    def __eq__(self, other):
        return isinstance(other, TypeVocab) and self.names == other.names

    def to_json(self) -> dict:
        return {"format": "synadapt-types", "version": 1, "ignore": IGNORE,
                "types": self.names, "counts": [self.counts.get(n, 0) for n in self.names]}

    @classmethod
    def from_json(cls, obj: dict) -> "TypeVocab":
        if obj.get("format") != "synadapt-types" or obj.get("version") != 1:
            raise FormatError("not a version-1 type vocabulary")
        names = obj["types"]
        return cls(names, dict(zip(names, obj.get("counts", []))))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "TypeVocab":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: malformed JSON ({e.msg})") from None
        return cls.from_json(obj)


def build_type_vocab(leaf_lists: Iterable[Iterable[AstLeaf]]) -> TypeVocab:
    counts = Counter()
    for leaves in leaf_lists:
        counts.update(leaf.type_name for leaf in leaves)
    if not counts:
        raise SynAdaptError("cannot build a type vocabulary from an empty corpus")
    names = sorted(counts, key=lambda n: (-counts[n], n))
    return TypeVocab(names, counts)


@dataclass(frozen=True)
class TypedWord:
    text: str
    span: tuple[int, int]
    type_name: str
    type_id: int


@dataclass(frozen=True)
class LabeledSample:
    id: str
    language: str
    words: tuple[TypedWord, ...]
    error_leaf_count: int = 0
    error_fraction: float = 0.0

    @property
    def excluded(self) -> bool:
        """Too much of the source sits in ERROR regions to use for adapter training."""
        return self.error_fraction > MAX_ERROR_FRACTION


def leaves_of(sample: SourceSample) -> tuple[list[AstLeaf], tree_sitter.Tree]:
    tree = parse_source(sample)
    return extract_leaves(tree, sample.text), tree


def label_sample(sample: SourceSample, vocab: TypeVocab) -> LabeledSample:
    leaves, tree = leaves_of(sample)
    words, unknown = [], 0
    for leaf in leaves:
        tid = vocab.id(leaf.type_name)
        if tid == IGNORE:
            unknown += 1
        words.append(TypedWord(leaf.text, leaf.byte_span, leaf.type_name, tid))
    nbytes = tree.root_node.end_byte
    frac = error_bytes(tree) / nbytes if nbytes else 0.0
    return LabeledSample(sample.id, sample.language, tuple(words), unknown, frac)


def label_corpus(samples: Sequence[SourceSample], vocab: TypeVocab | None = None
                 ) -> tuple[list[LabeledSample], TypeVocab]:
    """Label every sample, building the vocabulary from these samples unless given."""
    if vocab is None:
        vocab = build_type_vocab(leaves_of(s)[0] for s in samples)
    return [label_sample(s, vocab) for s in samples], vocab


def save_labeled(samples: Iterable[LabeledSample], path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"format": "synadapt-labeled", "version": 1}) + "\n")
        for s in samples:
            rec = {"id": s.id, "lang": s.language,
                   "words": [{"text": w.text, "span": list(w.span), "type": w.type_name}
                             for w in s.words],
                   "error_fraction": s.error_fraction}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    os.replace(tmp, path)
    return path


def load_labeled(path, vocab: TypeVocab) -> list[LabeledSample]:
    """Read labeled JSONL; type ids are re-resolved against ``vocab``."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
            if lineno == 1:
                if rec.get("format") != "synadapt-labeled" or rec.get("version") != 1:
                    raise FormatError(f"{path}: not a version-1 labeled file")
                continue
            words, unknown = [], 0
            for w in rec["words"]:
                tid = vocab.id(w["type"])
                unknown += tid == IGNORE
                words.append(TypedWord(w["text"], tuple(w["span"]), w["type"], tid))
            out.append(LabeledSample(rec["id"], rec.get("lang", "python"), tuple(words),
                                     unknown, float(rec.get("error_fraction", 0.0))))
    return out

