class Matrix:
    def __init__(self, rows):
        self.rows = [list(row) for row in rows]
        self.n_rows = len(self.rows)
        self.n_cols = len(self.rows[0]) if self.rows else 0

    @classmethod
    def identity(cls, size):
        return cls([[1 if i == j else 0 for j in range(size)] for i in range(size)])

    def transpose(self):
        return Matrix([[self.rows[i][j] for i in range(self.n_rows)] for j in range(self.n_cols)])

    def __add__(self, other):
        return Matrix([[a + b for a, b in zip(r1, r2)] for r1, r2 in zip(self.rows, other.rows)])

    def __mul__(self, other):
        if self.n_cols != other.n_rows:
            raise ValueError("shape mismatch")
        cols = other.transpose().rows
        return Matrix([[sum(a * b for a, b in zip(row, col)) for col in cols] for row in self.rows])

    def trace(self):
        return sum(self.rows[i][i] for i in range(min(self.n_rows, self.n_cols)))

    def __repr__(self):
        return "Matrix(%r)" % (self.rows,)


m = Matrix([[1, 2], [3, 4]])
print(m * Matrix.identity(2), m.transpose(), (m + m).trace())
