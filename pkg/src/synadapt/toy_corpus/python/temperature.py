ABSOLUTE_ZERO_C = -273.15


def celsius_to_fahrenheit(celsius):
    return celsius * 9 / 5 + 32


def fahrenheit_to_celsius(fahrenheit):
    return (fahrenheit - 32) * 5 / 9


def celsius_to_kelvin(celsius):
    if celsius < ABSOLUTE_ZERO_C:
        raise ValueError("below absolute zero")
    return celsius - ABSOLUTE_ZERO_C


class Thermometer:
    def __init__(self, unit="C"):
        self.unit = unit
        self.readings = []

    def record(self, value):
        self.readings.append(value)

    def average(self):
        if not self.readings:
            return None
        return sum(self.readings) / len(self.readings)

    def in_celsius(self):
        if self.unit == "C":
            return list(self.readings)
        return [fahrenheit_to_celsius(r) for r in self.readings]


t = Thermometer("F")
for r in (68, 72.5, 80):
    t.record(r)
print([round(c, 1) for c in t.in_celsius()], celsius_to_kelvin(0))
