"""Byte-level BPE over AST leaf texts, and type-inheriting sequence encoding.

Each leaf ("word") is encoded on its own, so every subtoken has exactly one
origin word and inherits that word's type id.
"""

from __future__ import annotations

import heapq
import json
import os
from collections import Counter, defaultdict
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

from .errors import FormatError, SynAdaptError
from .syntax import IGNORE, LabeledSample

SPECIALS = ("<s>", "</s>", "<pad>", "<mask>", "<unk>")
BOS, EOS, PAD, MASK, UNK = range(5)
N_SPECIAL = len(SPECIALS)
MIN_VOCAB = N_SPECIAL + 256
NO_WORD = -1


@lru_cache(maxsize=1)
def _byte_symbols() -> list[str]:
    """Printable stand-in character for every byte value (GPT-2 style)."""
    keep = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) \
        + list(range(ord("®"), ord("ÿ") + 1))
    table, extra = {}, 0
    for b in range(256):
        if b in keep:
            table[b] = chr(b)
        else:
            table[b] = chr(256 + extra)
            extra += 1
    return [table[b] for b in range(256)]


def _to_symbols(data: bytes) -> str:
    sym = _byte_symbols()
    return "".join(sym[b] for b in data)


def _from_symbols(s: str) -> bytes:
    inv = {c: b for b, c in enumerate(_byte_symbols())}
    try:
        return bytes(inv[c] for c in s)
    except KeyError as e:
        raise FormatError(f"vocabulary entry {s!r} has a non-byte symbol {e}") from None


class BpeModel:
    def __init__(self, merges: Sequence[tuple[int, int]]):
        self.tokens: list[bytes] = [b""] * N_SPECIAL + [bytes([b]) for b in range(256)]
        self.merges: list[tuple[int, int]] = []
        self.ranks: dict[tuple[int, int], int] = {}
        for left, right in merges:
            self._add_merge(left, right)
        self._cache: dict[str, list[int]] = {}

    def _add_merge(self, left: int, right: int) -> int:
        if not (N_SPECIAL <= left < len(self.tokens) and N_SPECIAL <= right < len(self.tokens)):
            raise FormatError(f"merge ({left}, {right}) refers to an unknown token")
        new_id = len(self.tokens)
        self.tokens.append(self.tokens[left] + self.tokens[right])
        self.ranks[(left, right)] = len(self.merges)
        self.merges.append((left, right))
        return new_id

    @property
    def vocab_size(self) -> int:
        return len(self.tokens)

    def encode_word(self, text: str) -> list[int]:
        cached = self._cache.get(text)
        if cached is not None:
            return list(cached)
        ids = [N_SPECIAL + b for b in text.encode("utf-8")]
        ranks = self.ranks
        while len(ids) > 1:
            best, best_rank = -1, None
            for i in range(len(ids) - 1):
                r = ranks.get((ids[i], ids[i + 1]))
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = i, r
            if best < 0:
                break
            merged = N_SPECIAL + 256 + best_rank
            pair = (ids[best], ids[best + 1])
            out, i = [], 0
            while i < len(ids):
                if i < len(ids) - 1 and (ids[i], ids[i + 1]) == pair:
                    out.append(merged)
                    i += 2
                else:
                    out.append(ids[i])
                    i += 1
            ids = out
        self._cache[text] = ids
        return list(ids)

    def token_bytes(self, token_id: int) -> bytes:
        if not 0 <= token_id < len(self.tokens):
            raise SynAdaptError(f"unknown token id {token_id}")
        return self.tokens[token_id]

    def token_str(self, token_id: int) -> str:
        if token_id < N_SPECIAL:
            return SPECIALS[token_id]
        return self.token_bytes(token_id).decode("utf-8", "replace")

    def decode(self, ids: Iterable[int]) -> str:
        return decode(ids, self)

    def to_json(self) -> dict:
        sym = [_to_symbols(t) for t in self.tokens[N_SPECIAL:]]
        return {
            "format": "synadapt-tokenizer",
            "version": 1,
            "specials": list(SPECIALS),
            "vocab": list(SPECIALS) + sym,
            "merges": [[sym[l - N_SPECIAL], sym[r - N_SPECIAL]] for l, r in self.merges],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BpeModel":
        if obj.get("version") != 1 or list(obj.get("specials", [])) != list(SPECIALS):
            raise FormatError("not a version-1 tokenizer file")
        index = {s: i for i, s in enumerate(obj["vocab"][N_SPECIAL:], start=N_SPECIAL)}
        model = cls([])
        for left, right in obj["merges"]:
            try:
                model._add_merge(index[left], index[right])
            except KeyError as e:
                raise FormatError(f"merge uses unknown symbol {e}") from None
        if model.vocab_size != len(obj["vocab"]):
            raise FormatError("vocab and merges disagree")
        for i, s in enumerate(obj["vocab"][N_SPECIAL:], start=N_SPECIAL):
            if _from_symbols(s) != model.tokens[i]:
                raise FormatError(f"vocab entry {i} does not match its merge")
        return model

    def save(self, path) -> Path:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.to_json(), ensure_ascii=False) + "\n", encoding="utf-8")
        os.replace(tmp, path)
        return path

    @classmethod
    def load(cls, path) -> "BpeModel":
        try:
            return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise FormatError(f"{path}: bad tokenizer file ({e})") from None

    def __eq__(self, other):
        return isinstance(other, BpeModel) and self.merges == other.merges


def train_bpe(words: Iterable[str], vocab_size: int = 4096, seed: int = 0,
              min_frequency: int = 2) -> BpeModel:
    """Greedy byte-pair merges over a bag of words.

    The most frequent adjacent pair is merged first; ties go to the
    lexicographically smallest merged byte string. Training stops at
    ``vocab_size`` or when no pair occurs ``min_frequency`` times. ``seed`` is
    accepted for interface symmetry; the procedure has no random choices.
    """
    del seed
    if vocab_size < MIN_VOCAB:
        raise ValueError(f"vocab_size must be >= {MIN_VOCAB}")
    freq = Counter(w for w in words if w)
    if not freq:
        raise SynAdaptError("cannot train a tokenizer on an empty corpus")

    model = BpeModel([])
    tokens = model.tokens
    seqs = [[N_SPECIAL + b for b in w.encode("utf-8")] for w in freq]
    weights = list(freq.values())

    pair_count: Counter = Counter()
    where: dict[tuple[int, int], set[int]] = defaultdict(set)
    for wi, seq in enumerate(seqs):
        for pair in zip(seq, seq[1:]):
            pair_count[pair] += weights[wi]
            where[pair].add(wi)

    heap = [(-c, tokens[p[0]] + tokens[p[1]], p) for p, c in pair_count.items()]
    heapq.heapify(heap)
    known = set(tokens)
    banned = set()

    while model.vocab_size < vocab_size and heap:
        neg, _, pair = heapq.heappop(heap)
        count = pair_count.get(pair, 0)
        if count != -neg:
            continue  # stale entry
        if count < min_frequency:
            break
        merged = tokens[pair[0]] + tokens[pair[1]]
        if pair in banned or merged in known:
            # a second route to an existing token would make the vocab ambiguous
            banned.add(pair)
            continue
        known.add(merged)
        new_id = model._add_merge(*pair)
        changed = set()
        for wi in sorted(where.pop(pair, ())):
            seq, w = seqs[wi], weights[wi]
            for p in zip(seq, seq[1:]):
                pair_count[p] -= w
                changed.add(p)
            out, i = [], 0
            while i < len(seq):
                if i < len(seq) - 1 and seq[i] == pair[0] and seq[i + 1] == pair[1]:
                    out.append(new_id)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            seqs[wi] = out
            for p in zip(out, out[1:]):
                pair_count[p] += w
                where[p].add(wi)
                changed.add(p)
        for p in changed:
            c = pair_count.get(p, 0)
            if c <= 0:
                pair_count.pop(p, None)
                where.pop(p, None)
            elif p != pair:
                heapq.heappush(heap, (-c, tokens[p[0]] + tokens[p[1]], p))
        pair_count.pop(pair, None)
    return model


def decode(ids: Iterable[int], model: BpeModel) -> str:
    """Concatenate subtoken bytes, dropping specials."""
    out = bytearray()
    for i in ids:
        if 0 <= i < N_SPECIAL:
            continue
        out += model.token_bytes(i)
    return out.decode("utf-8", "replace")


@dataclass(frozen=True)
class EncodedSequence:
    token_ids: tuple[int, ...]
    type_ids: tuple[int, ...]
    attention_mask: tuple[int, ...]
    word_index: tuple[int, ...]
    sample_id: str = ""

    def __len__(self):
        return len(self.token_ids)

    @property
    def n_real(self) -> int:
        return sum(self.attention_mask)


def _assemble(pieces: list[list[int]], types: list[int], first_word: int, max_len: int,
              sample_id: str) -> tuple[EncodedSequence, int]:
    """Pack whole words while they fit; returns the sequence and the number of words used."""
    budget = max_len - 2
    tok, typ, widx = [BOS], [IGNORE], [NO_WORD]
    used = 0
    for k, ids in enumerate(pieces):
        room = budget - (len(tok) - 1)
        if len(ids) > room:
            if used == 0 and room > 0:
                # a single word longer than the window: cut mid-word
                ids = ids[:room]
                tok += ids
                typ += [types[k]] * len(ids)
                widx += [first_word + k] * len(ids)
                used = 1
            break
        tok += ids
        typ += [types[k]] * len(ids)
        widx += [first_word + k] * len(ids)
        used += 1
    tok.append(EOS)
    typ.append(IGNORE)
    widx.append(NO_WORD)
    n = len(tok)
    pad = max_len - n
    seq = EncodedSequence(tuple(tok + [PAD] * pad), tuple(typ + [IGNORE] * pad),
                          tuple([1] * n + [0] * pad), tuple(widx + [NO_WORD] * pad), sample_id)
    return seq, used


def encode_labeled(sample: LabeledSample, model: BpeModel, max_len: int = 128) -> EncodedSequence:
    """BOS, subtokens of each word (inheriting the word's type), EOS, then PAD.

    Too-long inputs are cut at the last word boundary that fits; a first word
    that alone exceeds the window is cut mid-word.
    """
    if max_len < 3:
        raise ValueError("max_len must be >= 3")
    pieces = [model.encode_word(w.text) for w in sample.words]
    types = [w.type_id for w in sample.words]
    return _assemble(pieces, types, 0, max_len, sample.id)[0]


def encode_windows(sample: LabeledSample, model: BpeModel, max_len: int = 128
                   ) -> list[EncodedSequence]:
    """Cover the whole sample with consecutive word-aligned windows.

    ``word_index`` stays relative to ``sample.words`` in every window.
    """
    if max_len < 3:
        raise ValueError("max_len must be >= 3")
    pieces = [model.encode_word(w.text) for w in sample.words]
    types = [w.type_id for w in sample.words]
    if not pieces:
        return [_assemble([], [], 0, max_len, sample.id)[0]]
    out, start = [], 0
    while start < len(pieces):
        seq, used = _assemble(pieces[start:], types[start:], start, max_len, sample.id)
        out.append(seq)
        start += used
    return out


def save_encoded(seqs: Iterable[EncodedSequence], path, meta: dict | None = None) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"format": "synadapt-encoded", "version": 1, **(meta or {})},
                            sort_keys=True) + "\n")
        for s in seqs:
            fh.write(json.dumps({"sample": s.sample_id, "ids": s.token_ids, "types": s.type_ids,
                                 "mask": s.attention_mask, "words": s.word_index}) + "\n")
    os.replace(tmp, path)
    return path


def load_encoded(path) -> list[EncodedSequence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
            if lineno == 1:
                if rec.get("format") != "synadapt-encoded" or rec.get("version") != 1:
                    raise FormatError(f"{path}: not a version-1 encoded dataset")
                continue
            try:
                seq = EncodedSequence(tuple(rec["ids"]), tuple(rec["types"]), tuple(rec["mask"]),
                                      tuple(rec["words"]), rec.get("sample", ""))
            except KeyError as e:
                raise FormatError(f"{path}:{lineno}: missing field {e}") from None
            if not len(seq.token_ids) == len(seq.type_ids) == len(seq.attention_mask) \
                    == len(seq.word_index):
                raise FormatError(f"{path}:{lineno}: field lengths disagree")
            out.append(seq)
    return out
