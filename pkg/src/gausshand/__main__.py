"""Run the command-line interface with ``python -m gausshand``."""
import sys

from .cli import main

sys.exit(main())
