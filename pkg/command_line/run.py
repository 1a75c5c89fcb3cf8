#!/usr/bin/env python3
"""
Startup script for the kerdock-radar command line
"""

import sys
from pathlib import Path

# Add the project root to the path so the kerdock_radar package imports
sys.path.append(str(Path(__file__).parent.parent))

from command_line.main import main

if __name__ == "__main__":
    sys.exit(main())
