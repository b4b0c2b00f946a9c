"""Blur-preserving blind super-resolution toolkit.

Dual-branch adversarial training with a blur-conditional discriminator,
periodic adaptive weight interpolation between branches, half-half
inference fusion, blur-map dataset curation, and region-split evaluation.
"""

__version__ = "0.1.0"
