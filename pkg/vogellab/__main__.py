#!/usr/bin/env python3
"""Enable running vogellab as python -m vogellab"""

from vogellab.cli import main

if __name__ == "__main__":
    main()
