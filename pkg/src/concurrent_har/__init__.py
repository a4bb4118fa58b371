"""Multimodal CNN-LSTM recognizer for concurrent activities."""

__version__ = "0.1.0"
