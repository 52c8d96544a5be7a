"""
GuideTouch - obstacle sensing and vibrotactile feedback toolkit.
Entry script; all commands live in app.cli.

    python main.py coverage
    python main.py simulate --scene data/scenes/head_bar.json --trajectory data/trajectories/walk_forward.json
"""

import os
import sys

# Path setup so the script runs from any working directory
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
