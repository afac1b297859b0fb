"""Domain models and command-line commands."""
