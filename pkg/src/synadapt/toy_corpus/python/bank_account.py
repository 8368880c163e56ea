class InsufficientFunds(Exception):
    pass


class Account:
    interest_rate = 0.02

    def __init__(self, owner, balance=0):
        self.owner = owner
        self.balance = balance
        self.history = []

    def deposit(self, amount):
        if amount <= 0:
            raise ValueError("deposit must be positive")
        self.balance += amount
        self.history.append(("deposit", amount))

    def withdraw(self, amount):
        if amount > self.balance:
            raise InsufficientFunds("balance too low for %s" % self.owner)
        self.balance -= amount
        self.history.append(("withdraw", amount))

    def apply_interest(self):
        gained = self.balance * self.interest_rate
        self.balance += gained
        return gained


class SavingsAccount(Account):
    interest_rate = 0.05

    def withdraw(self, amount):
        if len([h for h in self.history if h[0] == "withdraw"]) >= 3:
            raise InsufficientFunds("withdrawal limit reached")
        super().withdraw(amount)


def transfer(source, target, amount):
    source.withdraw(amount)
    target.deposit(amount)


alice = Account("alice", 100)
bob = SavingsAccount("bob")
transfer(alice, bob, 40)
bob.apply_interest()
print(alice.balance, round(bob.balance, 2))
