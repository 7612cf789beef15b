"""Auto-weighted multi-task learning for multimodal classification."""

__version__ = "0.1.0"
