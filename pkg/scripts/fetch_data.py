#!/usr/bin/env python3
"""Download the UCI Adult and German Credit files used by the experiments.

Files land in --dest (default: $FAIRSTACK_DATA_DIR if set, else tests/data
next to this repository) so both the CLI configs and the data-dependent
tests can find them. Existing files are left alone unless --force is given.
"""

import argparse
import os
import sys
import urllib.error
import urllib.request
from pathlib import Path

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
FILES = {
    "adult.data": f"{UCI}/adult/adult.data",
    "adult.test": f"{UCI}/adult/adult.test",
    "german.data": f"{UCI}/statlog/german/german.data",
}
# loud sanity floor: a truncated download should not silently pass
MIN_BYTES = {"adult.data": 3_000_000, "adult.test": 1_500_000,
             "german.data": 70_000}


def default_dest() -> Path:
    env = os.environ.get("FAIRSTACK_DATA_DIR")
    if env:
        return Path(env)
    return Path(__file__).resolve().parent.parent / "tests" / "data"


def fetch(name: str, url: str, dest: Path, force: bool) -> bool:
    target = dest / name
    if target.exists() and not force:
        print(f"  {name}: already present ({target.stat().st_size} bytes), skipping")
        return True
    print(f"  {name}: downloading {url}")
    try:
        with urllib.request.urlopen(url, timeout=60) as resp:
            payload = resp.read()
    except (urllib.error.URLError, TimeoutError) as exc:
        print(f"  {name}: FAILED ({exc})", file=sys.stderr)
        return False
    if len(payload) < MIN_BYTES[name]:
        print(f"  {name}: FAILED (only {len(payload)} bytes, looks truncated)",
              file=sys.stderr)
        return False
    target.write_bytes(payload)
    print(f"  {name}: wrote {len(payload)} bytes")
    return True


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dest", type=Path, default=default_dest(),
                        help="directory to place the data files in")
    parser.add_argument("--force", action="store_true",
                        help="re-download even if files exist")
    args = parser.parse_args()

    args.dest.mkdir(parents=True, exist_ok=True)
    print(f"fetching into {args.dest}")
    ok = all([fetch(name, url, args.dest, args.force)
              for name, url in FILES.items()])
    if ok:
        print("done. point FAIRSTACK_DATA_DIR here (or pass dataset.path in "
              "a config) to use these files:")
        print(f"  export FAIRSTACK_DATA_DIR={args.dest}")
        return 0
    print("some files could not be fetched; see errors above", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
