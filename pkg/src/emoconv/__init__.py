"""Emotion classification for three-turn conversations.

A numpy-only stack: a small reverse-mode autodiff engine, LSTM/convolution
building blocks, a text pipeline, an RCNN classifier with fused sentence
vectors, a weighted cross-entropy trainer, and a hyperparameter sweep
harness.
"""

__version__ = "0.1.0"
