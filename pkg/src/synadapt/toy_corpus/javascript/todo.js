let nextId = 1;

function createTodo(title, tags = []) {
  return { id: nextId++, title, tags, done: false };
}

function complete(todos, id) {
  return todos.map((t) => (t.id === id ? { ...t, done: true } : t));
}

function pending(todos) {
  return todos.filter((t) => !t.done);
}

const todos = [createTodo("write code", ["work"]), createTodo("buy milk")];
console.log(pending(complete(todos, 1)).map((t) => t.title));
