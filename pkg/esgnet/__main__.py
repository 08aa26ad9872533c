"""
Allows running the command line interface with ``python -m esgnet``
"""

import sys

from esgnet.cli import main

sys.exit(main())
