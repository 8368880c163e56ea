import os
import fnmatch


def walk_files(root, pattern="*", skip_hidden=True):
    for dirpath, dirnames, filenames in os.walk(root):
        if skip_hidden:
            dirnames[:] = [d for d in dirnames if not d.startswith(".")]
        dirnames.sort()
        for name in sorted(filenames):
            if skip_hidden and name.startswith("."):
                continue
            if fnmatch.fnmatch(name, pattern):
                yield os.path.join(dirpath, name)


def total_size(paths):
    size = 0
    for path in paths:
        try:
            size += os.path.getsize(path)
        except OSError:
            continue
    return size


def largest(paths, count=3):
    sized = []
    for path in paths:
        try:
            sized.append((os.path.getsize(path), path))
        except OSError:
            pass
    sized.sort(reverse=True)
    return [p for _, p in sized[:count]]


if __name__ == "__main__":
    files = list(walk_files(".", "*.py"))
    print(len(files), total_size(files), largest(files))
