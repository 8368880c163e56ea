import math


class Vector:
    __slots__ = ("x", "y")

    def __init__(self, x=0.0, y=0.0):
        self.x = x
        self.y = y

    def __add__(self, other):
        return Vector(self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        return Vector(self.x - other.x, self.y - other.y)

    def __mul__(self, scalar):
        return Vector(self.x * scalar, self.y * scalar)

    __rmul__ = __mul__

    def dot(self, other):
        return self.x * other.x + self.y * other.y

    def length(self):
        return math.hypot(self.x, self.y)

    def normalized(self):
        n = self.length()
        if n == 0:
            raise ZeroDivisionError("cannot normalize zero vector")
        return Vector(self.x / n, self.y / n)

    def angle_to(self, other):
        cos = self.dot(other) / (self.length() * other.length())
        return math.acos(max(-1.0, min(1.0, cos)))

    def __eq__(self, other):
        return isinstance(other, Vector) and (self.x, self.y) == (other.x, other.y)

    def __repr__(self):
        return "Vector(%g, %g)" % (self.x, self.y)


a = Vector(3, 4)
b = Vector(1, 0)
print(a + b, 2 * a, a.length(), round(math.degrees(a.angle_to(b)), 2))
