"""Identity assignment for tracked boxes using coarse position readings."""
__version__ = "0.1.0"
