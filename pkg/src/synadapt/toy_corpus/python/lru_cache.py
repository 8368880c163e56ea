from collections import OrderedDict


class LRUCache:
    def __init__(self, capacity=128):
        self.capacity = capacity
        self.data = OrderedDict()
        self.hits = 0
        self.misses = 0

    def get(self, key, default=None):
        if key in self.data:
            self.data.move_to_end(key)
            self.hits += 1
            return self.data[key]
        self.misses += 1
        return default

    def put(self, key, value):
        if key in self.data:
            self.data.move_to_end(key)
        self.data[key] = value
        if len(self.data) > self.capacity:
            self.data.popitem(last=False)


def memoize(capacity=64):
    def decorator(func):
        cache = LRUCache(capacity)

        def wrapper(*args):
            result = cache.get(args)
            if result is None:
                result = func(*args)
                cache.put(args, result)
            return result

        wrapper.cache = cache
        return wrapper

    return decorator


@memoize(capacity=16)
def slow_square(x):
    return x * x


for n in [1, 2, 1, 3, 2]:
    slow_square(n)
print(slow_square.cache.hits, slow_square.cache.misses)
