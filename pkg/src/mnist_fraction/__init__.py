"""Synthetic handwritten-fraction dataset built from MNIST, with classical
baselines, a numpy CNN and a fraction parser."""

__version__ = "0.1.0"
