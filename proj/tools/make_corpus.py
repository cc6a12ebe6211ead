#!/usr/bin/env python3
"""Build a plain-text training corpus from the docstrings of a Python source tree.

Only ASCII docstrings longer than 200 characters are kept. Files are visited
in sorted order so the output is stable for a given source tree.
"""

import argparse
import ast
import pathlib
import sys
import sysconfig

SKIP_PARTS = {"test", "tests", "idlelib", "lib2to3", "site-packages", "dist-packages"}


def docstrings(root: pathlib.Path):
    for path in sorted(root.rglob("*.py")):
        if SKIP_PARTS.intersection(path.parts):
            continue
        try:
            tree = ast.parse(path.read_text(encoding="utf-8"))
        except (SyntaxError, UnicodeDecodeError, ValueError):
            continue
        for node in ast.walk(tree):
            if isinstance(node, (ast.Module, ast.ClassDef, ast.FunctionDef, ast.AsyncFunctionDef)):
                doc = ast.get_docstring(node)
                if doc and len(doc) > 200 and doc.isascii():
                    yield doc.strip()


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("output", type=pathlib.Path)
    ap.add_argument("--source", type=pathlib.Path, default=pathlib.Path(sysconfig.get_paths()["stdlib"]))
    ap.add_argument("--min-bytes", type=int, default=1 << 20)
    args = ap.parse_args()

    text = "\n\n".join(docstrings(args.source)) + "\n"
    if len(text) < args.min_bytes:
        print(f"corpus has {len(text)} bytes, need {args.min_bytes}", file=sys.stderr)
        return 1
    args.output.parent.mkdir(parents=True, exist_ok=True)
    args.output.write_text(text, encoding="ascii")
    print(f"wrote {len(text)} bytes to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
