from collections import defaultdict


class EventBus:
    def __init__(self):
        self.handlers = defaultdict(list)
        self.log = []

    def subscribe(self, topic, handler):
        self.handlers[topic].append(handler)
        return lambda: self.handlers[topic].remove(handler)

    def publish(self, topic, payload=None):
        self.log.append((topic, payload))
        results = []
        for handler in list(self.handlers[topic]):
            results.append(handler(payload))
        for handler in list(self.handlers["*"]):
            handler((topic, payload))
        return results


bus = EventBus()
seen = []
unsubscribe = bus.subscribe("user.created", lambda p: "welcome " + p["name"])
bus.subscribe("*", seen.append)
print(bus.publish("user.created", {"name": "ada"}))
unsubscribe()
print(bus.publish("user.created", {"name": "bob"}), len(seen))
