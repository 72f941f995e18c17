#!/usr/bin/env python3
"""Run the full experiment matrix.

Uses the default desk-scale suite unless --config points at a JSON file;
forwards every flag to the `mumt matrix` subcommand.

    python scripts/run_matrix.py --out results --verbose
"""

import sys

from mumt.cli import main

if __name__ == "__main__":
    sys.exit(main(["matrix", *sys.argv[1:]]))
