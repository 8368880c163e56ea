from collections import deque


class BoundedQueue:
    def __init__(self, capacity):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.items = deque()
        self.dropped = 0

    def put(self, value):
        if len(self.items) >= self.capacity:
            self.items.popleft()
            self.dropped += 1
        self.items.append(value)

    def get(self):
        if not self.items:
            return None
        return self.items.popleft()

    def drain(self):
        out = list(self.items)
        self.items.clear()
        return out


def moving_average(values, window):
    queue = BoundedQueue(window)
    total = 0.0
    result = []
    for value in values:
        if len(queue.items) == window:
            total -= queue.items[0]
        queue.put(value)
        total += value
        result.append(total / len(queue.items))
    return result


print(moving_average([1, 2, 3, 4, 5, 6], 3))
