"""Decentralized consensus optimization: EXTRA and DGD over synthetic networks."""

__version__ = "0.1.0"
