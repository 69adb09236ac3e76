"""Exception types raised across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """Invalid argument or inconsistent input."""


class ConstructionError(RuntimeError):
    """A random graph could not be built within the retry budget."""


class SpecError(ValueError):
    """Invalid compressor description."""


class CapabilityError(TypeError):
    """An oracle lacks a feature the caller needs."""


class ParseError(ValueError):
    """Malformed LibSVM input. ``line`` is 1-based, or None for whole-file errors."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ConfigError(ValueError):
    """Malformed or invalid experiment config."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
