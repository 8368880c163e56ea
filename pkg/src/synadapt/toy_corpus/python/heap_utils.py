import heapq


def top_k(values, k):
    heap = []
    for value in values:
        if len(heap) < k:
            heapq.heappush(heap, value)
        elif value > heap[0]:
            heapq.heapreplace(heap, value)
    return sorted(heap, reverse=True)


def merge_sorted(*streams):
    heap = []
    for index, stream in enumerate(streams):
        iterator = iter(stream)
        first = next(iterator, None)
        if first is not None:
            heap.append((first, index, iterator))
    heapq.heapify(heap)
    while heap:
        value, index, iterator = heapq.heappop(heap)
        yield value
        nxt = next(iterator, None)
        if nxt is not None:
            heapq.heappush(heap, (nxt, index, iterator))


class PriorityQueue:
    def __init__(self):
        self.heap = []
        self.counter = 0

    def push(self, item, priority):
        heapq.heappush(self.heap, (priority, self.counter, item))
        self.counter += 1

    def pop(self):
        return heapq.heappop(self.heap)[2]

    def __bool__(self):
        return bool(self.heap)


print(top_k([5, 1, 9, 3, 7, 8], 3))
print(list(merge_sorted([1, 4, 7], [2, 5], [3, 6, 9])))
pq = PriorityQueue()
pq.push("low", 5)
pq.push("high", 1)
print(pq.pop())
