import time
import functools


class RetryError(Exception):
    def __init__(self, attempts, last_error):
        super().__init__("gave up after %d attempts" % attempts)
        self.attempts = attempts
        self.last_error = last_error


def retry(times=3, delay=0.0, backoff=2.0, exceptions=(Exception,)):
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            wait = delay
            last = None
            for attempt in range(1, times + 1):
                try:
                    return func(*args, **kwargs)
                except exceptions as error:
                    last = error
                    if attempt < times and wait > 0:
                        time.sleep(wait)
                        wait *= backoff
            raise RetryError(times, last)

        return wrapper

    return decorator


calls = {"count": 0}


@retry(times=4)
def flaky():
    calls["count"] += 1
    if calls["count"] < 3:
        raise ConnectionError("not yet")
    return "ok after %d" % calls["count"]


print(flaky())
