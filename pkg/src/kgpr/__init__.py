"""Graph-pretrained two-tower triplet retrieval for knowledge graphs."""

__version__ = "0.1.0"
