import argparse


def build_parser():
    parser = argparse.ArgumentParser(description="Count lines in files")
    parser.add_argument("paths", nargs="*", help="files to read")
    parser.add_argument("--skip-blank", action="store_true")
    parser.add_argument("--min-length", type=int, default=0)
    parser.add_argument("--verbose", "-v", action="count", default=0)
    return parser


def count_lines(lines, skip_blank=False, min_length=0):
    total = 0
    for line in lines:
        stripped = line.strip()
        if skip_blank and not stripped:
            continue
        if len(stripped) < min_length:
            continue
        total += 1
    return total


def main(argv=None):
    args = build_parser().parse_args(argv)
    grand_total = 0
    for path in args.paths:
        with open(path) as handle:
            n = count_lines(handle, args.skip_blank, args.min_length)
        if args.verbose:
            print(path, n)
        grand_total += n
    print(grand_total)
    return 0


print(count_lines(["a", "", "  ", "abc"], skip_blank=True, min_length=2))
