from statistics import mean, median, pstdev

GRADE_BANDS = [(90, "A"), (80, "B"), (70, "C"), (60, "D"), (0, "F")]


def letter(score):
    for threshold, grade in GRADE_BANDS:
        if score >= threshold:
            return grade
    return "F"


class Gradebook:
    def __init__(self):
        self.scores = {}

    def add_score(self, student, score):
        if not 0 <= score <= 100:
            raise ValueError("score must be between 0 and 100")
        self.scores.setdefault(student, []).append(score)

    def average(self, student):
        return mean(self.scores[student])

    def report(self):
        rows = []
        for student in sorted(self.scores):
            avg = self.average(student)
            rows.append((student, round(avg, 1), letter(avg)))
        return rows

    def class_stats(self):
        averages = [self.average(s) for s in self.scores]
        return {"mean": mean(averages), "median": median(averages), "stdev": pstdev(averages)}


book = Gradebook()
for name, score in [("ana", 91), ("ben", 72), ("ana", 85), ("cai", 64), ("ben", 80)]:
    book.add_score(name, score)
print(book.report())
print(book.class_stats())
