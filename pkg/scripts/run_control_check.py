#!/usr/bin/env python3
"""Steer a grid of starts to the anchor state and verify terminal errors."""
import sys

from pairdrift.cli import main

if __name__ == "__main__":
    sys.exit(main(["control"] + sys.argv[1:]))
