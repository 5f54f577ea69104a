#!/usr/bin/env python
"""
Run the Distribution LMP Volatility Toolkit.

Usage:
    python run.py fixture --case current -o net.json     # Write the fixture network
    python run.py profiles --seed 1 -o profiles.csv      # Write a synthetic year
    python run.py run --network net.json --profiles profiles.csv --workers 8
    python run.py stats runs/current                     # Level summary tables
    python run.py plot runs/current --kind level-bars    # SVG charts
"""

import os
import sys

# Add the package directory to the path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from dlmp.cli import main


if __name__ == '__main__':
    sys.exit(main())
