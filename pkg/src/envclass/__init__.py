"""Environment classification (O / II / INW) from passive multi-band wireless measurements."""

__version__ = "0.1.0"
