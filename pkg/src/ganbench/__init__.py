"""GAN variants trained with a small reverse-mode autodiff core, plus distribution metrics."""
__version__ = "0.1.0"
