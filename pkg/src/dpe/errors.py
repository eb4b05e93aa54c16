"""Exception hierarchy shared by the dpe modules."""

from __future__ import annotations


class DpeError(Exception):
    """Base class for every error raised by this package."""


class ParseError(DpeError):
    """A policy or scenario document could not be read."""


class ValidationError(DpeError):
    """A structurally valid document violates a semantic rule."""

    def __init__(self, subject: str, message: str = "") -> None:
        self.subject = subject
        super().__init__(f"{subject}: {message}" if message else subject)


class InvalidGeometry(DpeError):
    pass


class ScenarioError(DpeError):
    """First failing validation of a scenario; ``field`` is a dotted path."""

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")
