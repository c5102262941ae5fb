"""taxalign: corpus taxonomy mining and distribution-alignment toolkit."""

__version__ = "0.1.0"
