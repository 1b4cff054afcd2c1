"""Cross-domain image classification through text descriptions and a finetuned LM."""

__version__ = "0.1.0"
