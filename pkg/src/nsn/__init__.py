"""Depth-detachable MLP training on MNIST.

One parameter store backs a nested family of classifiers: removing the
trained base model's leading layers yields smaller models that were
optimized jointly with it and stay accurate on their own.
"""

__version__ = "0.1.0"
