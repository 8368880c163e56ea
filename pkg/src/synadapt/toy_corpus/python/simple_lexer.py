import re

TOKEN_SPEC = [
    ("NUMBER", r"\d+(\.\d*)?"),
    ("NAME", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("OP", r"[+\-*/()=]"),
    ("SKIP", r"[ \t]+"),
    ("MISMATCH", r"."),
]
MASTER = re.compile("|".join("(?P<%s>%s)" % pair for pair in TOKEN_SPEC))


class Token:
    def __init__(self, kind, value, column):
        self.kind = kind
        self.value = value
        self.column = column

    def __repr__(self):
        return "Token(%s, %r)" % (self.kind, self.value)


def tokenize(code):
    tokens = []
    for match in MASTER.finditer(code):
        kind = match.lastgroup
        value = match.group()
        if kind == "SKIP":
            continue
        if kind == "MISMATCH":
            raise SyntaxError("unexpected %r at %d" % (value, match.start()))
        if kind == "NUMBER":
            value = float(value) if "." in value else int(value)
        tokens.append(Token(kind, value, match.start()))
    return tokens


def evaluate(tokens):
    stack = []
    for tok in tokens:
        if tok.kind == "NUMBER":
            stack.append(tok.value)
    return sum(stack)


print(tokenize("total = price * 3 + tax"))
print(evaluate(tokenize("1 + 2 + 3.5")))
