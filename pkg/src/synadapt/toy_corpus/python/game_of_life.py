def neighbors(cell):
    x, y = cell
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx or dy:
                yield (x + dx, y + dy)


def step(alive):
    counts = {}
    for cell in alive:
        for n in neighbors(cell):
            counts[n] = counts.get(n, 0) + 1
    born = {c for c, k in counts.items() if k == 3 and c not in alive}
    survive = {c for c in alive if counts.get(c, 0) in (2, 3)}
    return born | survive


def render(alive, width, height):
    rows = []
    for y in range(height):
        row = "".join("#" if (x, y) in alive else "." for x in range(width))
        rows.append(row)
    return "\n".join(rows)


glider = {(1, 0), (2, 1), (0, 2), (1, 2), (2, 2)}
state = glider
for generation in range(4):
    state = step(state)
print(render(state, 6, 6))
print(len(state) == len(glider))
