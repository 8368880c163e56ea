import string
from collections import Counter

STOP_WORDS = {"the", "a", "an", "and", "of", "to", "in", "is", "it"}


def normalize(text):
    table = str.maketrans("", "", string.punctuation)
    return text.lower().translate(table)


def frequencies(text, ignore_stop_words=True):
    words = normalize(text).split()
    if ignore_stop_words:
        words = [w for w in words if w not in STOP_WORDS]
    return Counter(words)


def histogram(counter, limit=5, width=20):
    if not counter:
        return ""
    most = counter.most_common(limit)
    peak = most[0][1]
    lines = []
    for word, count in most:
        bar = "*" * max(1, round(width * count / peak))
        lines.append("%-10s %s %d" % (word, bar, count))
    return "\n".join(lines)


TEXT = """It is a truth universally acknowledged, that a single man in
possession of a good fortune, must be in want of a wife. A truth is a truth."""
print(histogram(frequencies(TEXT)))
