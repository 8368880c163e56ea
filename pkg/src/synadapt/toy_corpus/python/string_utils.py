def reverse_words(sentence):
    return " ".join(reversed(sentence.split()))


def is_palindrome(text):
    cleaned = [c.lower() for c in text if c.isalnum()]
    return cleaned == cleaned[::-1]


def snake_to_camel(name):
    head, *rest = name.split("_")
    return head + "".join(part.capitalize() for part in rest)


def camel_to_snake(name):
    out = []
    for i, ch in enumerate(name):
        if ch.isupper() and i > 0:
            out.append("_")
        out.append(ch.lower())
    return "".join(out)


def truncate(text, width, suffix="..."):
    if len(text) <= width:
        return text
    return text[: max(0, width - len(suffix))] + suffix


def count_vowels(text):
    return sum(1 for c in text.lower() if c in "aeiou")


print(reverse_words("hello big world"))
print(is_palindrome("A man, a plan, a canal: Panama"))
print(snake_to_camel("find_bad_files"), camel_to_snake("findBadFiles"))
print(truncate("abcdefghij", 6), count_vowels("Programming"))
