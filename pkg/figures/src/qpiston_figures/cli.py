"""Command line entry: render one named figure (or all of them) from a
directory of machine CSV artifacts into an output directory."""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURES, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qpiston-figures",
        description="render publication-style figures from qpiston CSV artifacts",
    )
    parser.add_argument(
        "figure",
        help="figure name or 'all'; known: " + ", ".join(sorted(FIGURES)),
    )
    parser.add_argument("input_dir", help="directory holding the preset CSV artifacts")
    parser.add_argument("output_dir", help="directory for the rendered images")
    args = parser.parse_args(argv)

    names = sorted(FIGURES) if args.figure == "all" else [args.figure]
    unknown = [name for name in names if name not in FIGURES]
    if unknown:
        parser.error(f"unknown figure '{unknown[0]}'; known: {', '.join(sorted(FIGURES))}")

    try:
        for name in names:
            result = render(name, args.input_dir, args.output_dir)
            refs = ", ".join(f"{k} = {v:.6g}" for k, v in sorted(result.references.items()))
            print(f"wrote {result.path} ({refs})")
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
