"""Repair poisoned graph convolutional networks via unlearning fine-tuning."""

__version__ = "0.1.0"
