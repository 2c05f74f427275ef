#!/usr/bin/env python3
"""Long-time average of U for the auxiliary system, one CSV per h."""
import sys

from pairdrift.cli import main

if __name__ == "__main__":
    sys.exit(main(["figure1"] + sys.argv[1:]))
