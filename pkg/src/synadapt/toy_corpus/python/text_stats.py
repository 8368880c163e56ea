import re
from collections import Counter

WORD_RE = re.compile(r"[A-Za-z']+")


def words(text):
    return [w.lower() for w in WORD_RE.findall(text)]


def sentence_count(text):
    return max(1, len(re.findall(r"[.!?]+", text)))


def summary(text):
    tokens = words(text)
    counts = Counter(tokens)
    longest = max(tokens, key=len) if tokens else ""
    return {
        "words": len(tokens),
        "unique": len(counts),
        "sentences": sentence_count(text),
        "longest": longest,
        "top": counts.most_common(3),
    }


def average_word_length(text):
    tokens = words(text)
    if not tokens:
        return 0.0
    return sum(len(t) for t in tokens) / len(tokens)


sample = "The quick brown fox jumps over the lazy dog. The dog sleeps!"
print(summary(sample))
print(round(average_word_length(sample), 2))
