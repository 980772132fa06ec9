"""Heart-sound segmentation, per-cycle features and murmur classification."""
__version__ = "0.1.0"
