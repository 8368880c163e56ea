import itertools
from datetime import date


class Task:
    _ids = itertools.count(1)

    def __init__(self, title, due=None, tags=()):
        self.id = next(self._ids)
        self.title = title
        self.due = due
        self.tags = set(tags)
        self.done = False

    def complete(self):
        self.done = True

    def overdue(self, today):
        return not self.done and self.due is not None and self.due < today


class TodoList:
    def __init__(self):
        self.tasks = {}

    def add(self, title, **kwargs):
        task = Task(title, **kwargs)
        self.tasks[task.id] = task
        return task.id

    def complete(self, task_id):
        self.tasks[task_id].complete()

    def pending(self):
        return [t for t in self.tasks.values() if not t.done]

    def by_tag(self, tag):
        return [t.title for t in self.tasks.values() if tag in t.tags]

    def overdue(self, today=None):
        today = today or date.today()
        return [t.title for t in self.tasks.values() if t.overdue(today)]


todo = TodoList()
first = todo.add("write report", due=date(2024, 1, 10), tags=["work"])
todo.add("buy milk", tags=["home"])
todo.add("review code", due=date(2024, 1, 5), tags=["work"])
todo.complete(first)
print(todo.by_tag("work"), todo.overdue(date(2024, 1, 20)), len(todo.pending()))
