from datetime import date, datetime, timedelta

WEEKEND = {5, 6}


def business_days(start, end):
    days = 0
    current = start
    while current <= end:
        if current.weekday() not in WEEKEND:
            days += 1
        current += timedelta(days=1)
    return days


def add_business_days(start, count):
    current = start
    while count > 0:
        current += timedelta(days=1)
        if current.weekday() not in WEEKEND:
            count -= 1
    return current


def parse_iso(text):
    return datetime.strptime(text, "%Y-%m-%d").date()


def age(birthday, today=None):
    today = today or date.today()
    years = today.year - birthday.year
    if (today.month, today.day) < (birthday.month, birthday.day):
        years -= 1
    return years


start = parse_iso("2024-03-01")
print(business_days(start, parse_iso("2024-03-15")))
print(add_business_days(start, 5), age(parse_iso("1990-07-20"), parse_iso("2024-07-19")))
