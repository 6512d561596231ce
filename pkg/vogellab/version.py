"""Version information for vogellab."""

# Version format: MAJOR.MINOR[.devN]
# - Use .devN suffix during development - add after making a release
# - Remove .devN for stable releases
__version__ = "0.1"
