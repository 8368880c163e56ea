from collections import deque, defaultdict


class Graph:
    def __init__(self):
        self.edges = defaultdict(set)

    def add_edge(self, a, b):
        self.edges[a].add(b)
        self.edges[b].add(a)

    def neighbors(self, node):
        return sorted(self.edges[node])

    def shortest_path(self, start, goal):
        parents = {start: None}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            if node == goal:
                break
            for nxt in self.neighbors(node):
                if nxt not in parents:
                    parents[nxt] = node
                    queue.append(nxt)
        if goal not in parents:
            return None
        path = []
        node = goal
        while node is not None:
            path.append(node)
            node = parents[node]
        return path[::-1]

    def components(self):
        seen = set()
        groups = []
        for node in sorted(self.edges):
            if node in seen:
                continue
            group = []
            stack = [node]
            while stack:
                current = stack.pop()
                if current in seen:
                    continue
                seen.add(current)
                group.append(current)
                stack.extend(self.edges[current])
            groups.append(sorted(group))
        return groups


g = Graph()
for a, b in [("a", "b"), ("b", "c"), ("c", "d"), ("x", "y")]:
    g.add_edge(a, b)
print(g.shortest_path("a", "d"), g.components())
