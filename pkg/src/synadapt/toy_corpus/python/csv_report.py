import csv
import io


def read_rows(text):
    reader = csv.DictReader(io.StringIO(text))
    return [row for row in reader]


def group_totals(rows, key, value):
    totals = {}
    for row in rows:
        group = row[key]
        totals[group] = totals.get(group, 0.0) + float(row[value])
    return totals


def render(totals):
    width = max(len(name) for name in totals)
    lines = []
    for name in sorted(totals):
        lines.append(name.ljust(width) + " | " + format(totals[name], ".2f"))
    return "\n".join(lines)


DATA = """region,product,amount
north,widget,10.5
south,widget,3.25
north,gadget,7
east,gadget,1.75
"""

rows = read_rows(DATA)
print(render(group_totals(rows, "region", "amount")))
