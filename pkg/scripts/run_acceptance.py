"""Print one PASS/FAIL line per acceptance criterion.

Usage: python scripts/run_acceptance.py [N ...]
"""

import argparse
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(HERE, "..", "tests"))

from test_acceptance import CRITERIA  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("numbers", nargs="*", type=int, help="criteria to run (default: all)")
    args = ap.parse_args()
    failed = 0
    for k in args.numbers or sorted(CRITERIA):
        ok, detail = CRITERIA[k]()
        failed += not ok
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
