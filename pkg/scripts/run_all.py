#!/usr/bin/env python3
"""Run every experiment into one output tree (desk-scale defaults)."""
import sys

from pairdrift.cli import main

if __name__ == "__main__":
    sys.exit(main(["all"] + sys.argv[1:]))
