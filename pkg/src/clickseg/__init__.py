"""Click-based interactive segmentation benchmark with online adaptation."""

__version__ = "0.1.0"
