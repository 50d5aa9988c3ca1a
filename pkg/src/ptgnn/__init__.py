"""Multimodal graph training with difference attention and cross-modal
alignment, enabling video-only inference of cybersickness levels."""

__version__ = "0.1.0"
