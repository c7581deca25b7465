"""
anderson-lab - development entry point.

Equivalent to the installed ``lab`` console script:
  python main.py run config/samples/ct.json --workers 4
  python main.py replay runs/ct/manifest.json 17
"""

import sys

from lab.cli import main

if __name__ == "__main__":
    sys.exit(main())
