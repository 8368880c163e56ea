from dataclasses import dataclass, field


@dataclass
class Item:
    name: str
    price: float
    quantity: int = 0


@dataclass
class Inventory:
    items: dict = field(default_factory=dict)

    def add(self, name, price, quantity=1):
        if name in self.items:
            self.items[name].quantity += quantity
        else:
            self.items[name] = Item(name, price, quantity)

    def remove(self, name, quantity=1):
        item = self.items.get(name)
        if item is None or item.quantity < quantity:
            raise KeyError(name)
        item.quantity -= quantity
        if item.quantity == 0:
            del self.items[name]

    def total_value(self):
        return sum(i.price * i.quantity for i in self.items.values())

    def low_stock(self, threshold=2):
        return [i.name for i in self.items.values() if i.quantity <= threshold]


stock = Inventory()
stock.add("apple", 0.5, 10)
stock.add("pear", 0.75, 2)
stock.remove("apple", 3)
print(stock.total_value(), stock.low_stock())
