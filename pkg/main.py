"""Legacy main.py - redirects to the rtep command line"""

import sys

from rtep.main import main

__all__ = ["main"]

if __name__ == "__main__":
    sys.exit(main())
