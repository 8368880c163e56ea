class InvalidTransition(Exception):
    pass


class StateMachine:
    def __init__(self, initial, transitions):
        self.state = initial
        self.transitions = transitions
        self.history = [initial]
        self.listeners = []

    def on_change(self, callback):
        self.listeners.append(callback)

    def fire(self, event):
        key = (self.state, event)
        if key not in self.transitions:
            raise InvalidTransition("%s cannot handle %s" % (self.state, event))
        previous = self.state
        self.state = self.transitions[key]
        self.history.append(self.state)
        for callback in self.listeners:
            callback(previous, event, self.state)
        return self.state


TRANSITIONS = {
    ("idle", "start"): "running",
    ("running", "pause"): "paused",
    ("paused", "resume"): "running",
    ("running", "stop"): "idle",
    ("paused", "stop"): "idle",
}

machine = StateMachine("idle", TRANSITIONS)
machine.on_change(lambda a, e, b: print(a, "-" + e + "->", b))
for event in ["start", "pause", "resume", "stop"]:
    machine.fire(event)
try:
    machine.fire("pause")
except InvalidTransition as error:
    print("error:", error)
