class TrieNode:
    def __init__(self):
        self.children = {}
        self.terminal = False
        self.count = 0


class Trie:
    def __init__(self, words=()):
        self.root = TrieNode()
        for word in words:
            self.insert(word)

    def insert(self, word):
        node = self.root
        for ch in word:
            node = node.children.setdefault(ch, TrieNode())
            node.count += 1
        node.terminal = True

    def contains(self, word):
        node = self._walk(word)
        return node is not None and node.terminal

    def _walk(self, prefix):
        node = self.root
        for ch in prefix:
            node = node.children.get(ch)
            if node is None:
                return None
        return node

    def with_prefix(self, prefix):
        node = self._walk(prefix)
        if node is None:
            return []
        results = []
        stack = [(node, prefix)]
        while stack:
            current, text = stack.pop()
            if current.terminal:
                results.append(text)
            for ch, child in current.children.items():
                stack.append((child, text + ch))
        return sorted(results)


words = Trie(["car", "card", "care", "cat", "dog"])
print(words.with_prefix("car"), words.contains("ca"), words.contains("cat"))
