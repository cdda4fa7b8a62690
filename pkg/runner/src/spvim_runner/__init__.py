"""Reference external model runner for the spvim learner protocol (v1)."""

__version__ = "0.1.0"

from .server import serve, main

__all__ = ["serve", "main", "__version__"]
