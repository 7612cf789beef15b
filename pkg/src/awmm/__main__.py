"""``python -m awmm``."""

import sys

from .cli import main

sys.exit(main())
