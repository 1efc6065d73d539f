#!/usr/bin/env python3
"""Run the default experiment and print the vs-perf comparison table."""

import sys
from pathlib import Path

from fedtrust.cli import main

if __name__ == "__main__":
    config = Path(__file__).resolve().parent.parent / "configs" / "default.txt"
    raise SystemExit(main(["run", str(sys.argv[1] if len(sys.argv) > 1 else config)]))
