#!/usr/bin/env python3
"""Search an admissible ledger and certify every inequality on grids."""
import sys

from pairdrift.cli import main

if __name__ == "__main__":
    sys.exit(main(["verify"] + sys.argv[1:]))
