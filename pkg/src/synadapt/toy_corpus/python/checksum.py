import hashlib
import zlib


def adler32(data):
    a, b = 1, 0
    for byte in data:
        a = (a + byte) % 65521
        b = (b + a) % 65521
    return (b << 16) | a


def luhn_valid(number):
    digits = [int(d) for d in str(number)][::-1]
    total = 0
    for index, digit in enumerate(digits):
        if index % 2 == 1:
            digit *= 2
            if digit > 9:
                digit -= 9
        total += digit
    return total % 10 == 0


def file_digest(path, algorithm="sha256", chunk_size=65536):
    digest = hashlib.new(algorithm)
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


payload = b"Wikipedia"
assert adler32(payload) == zlib.adler32(payload)
print(hex(adler32(payload)), luhn_valid(79927398713), luhn_valid(1234))
