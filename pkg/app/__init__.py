"""
GuideTouch toolkit: simulated dual multizone ToF sensing, obstacle
classification into motor masks, and the perception-study statistics.
"""

__version__ = "1.0.0"
