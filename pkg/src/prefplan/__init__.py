"""Opportunistic qualitative planning under incomplete preferences over co-safe LTL goals."""

__version__ = "0.1.0"
