"""Online fine-tuning of a diffusion base policy through bounded action edits and argmax-Q selection."""

__version__ = "0.1.0"
