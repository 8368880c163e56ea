def merge_intervals(intervals):
    ordered = sorted(intervals, key=lambda pair: pair[0])
    merged = []
    for start, end in ordered:
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [tuple(pair) for pair in merged]


def total_covered(intervals):
    return sum(end - start for start, end in merge_intervals(intervals))


def overlaps(first, second):
    return first[0] < second[1] and second[0] < first[1]


def free_slots(busy, day_start, day_end):
    slots = []
    cursor = day_start
    for start, end in merge_intervals(busy):
        if start > cursor:
            slots.append((cursor, start))
        cursor = max(cursor, end)
    if cursor < day_end:
        slots.append((cursor, day_end))
    return slots


meetings = [(9, 10), (9.5, 11), (13, 14), (15, 15.5)]
print(merge_intervals(meetings), total_covered(meetings))
print(free_slots(meetings, 8, 17), overlaps((1, 3), (2, 4)))
