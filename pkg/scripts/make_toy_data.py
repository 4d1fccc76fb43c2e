#!/usr/bin/env python3
"""Regenerate the bundled demo inputs under data/.

Everything is derived deterministically from the fixtures in
multipath.toydata, so the files can be rebuilt at any time:

    python3 scripts/make_toy_data.py [out_dir]
"""

import sys
from pathlib import Path

from multipath.toydata import write_toy_data


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data"
    for path in write_toy_data(out_dir):
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
