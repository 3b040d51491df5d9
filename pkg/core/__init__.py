# Core package for czleak

__version__ = "0.3.1"
