"""Multimodal transformer networks for video-grounded dialogue, on a small numpy autodiff core."""

__version__ = "0.1.0"
