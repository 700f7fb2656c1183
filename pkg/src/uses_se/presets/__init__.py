"""Shipped run configurations (loaded with importlib.resources)."""
