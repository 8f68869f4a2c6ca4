"""
Fusion place recognition toolkit: LiDAR-camera interaction transforms,
loss oracles, benchmark data organization and recall evaluation.
"""
__version__ = "1.0.0"
