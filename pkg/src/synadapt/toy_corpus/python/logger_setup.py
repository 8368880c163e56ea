import logging
import sys

FORMAT = "%(asctime)s %(levelname)-8s %(name)s: %(message)s"


def configure(level="INFO", stream=None):
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(logging.Formatter(FORMAT))
    root.addHandler(handler)
    root.setLevel(getattr(logging, level.upper()))
    return root


class CountingHandler(logging.Handler):
    def __init__(self):
        super().__init__()
        self.counts = {}

    def emit(self, record):
        self.counts[record.levelname] = self.counts.get(record.levelname, 0) + 1


log = logging.getLogger("demo")
counter = CountingHandler()
log.addHandler(counter)
configure("DEBUG")
log.debug("starting")
log.warning("disk almost full")
log.error("failed to write %s", "report.txt")
print(counter.counts)
