"""Exception hierarchy shared by all uailab modules."""

from __future__ import annotations


class UailabError(Exception):
    """Base class for domain errors (mapped to CLI exit code 1)."""


class ResourceLimitError(UailabError):
    """A configured cap on prefix length, steps, or enumeration size was exceeded."""


class InsufficientBudget(UailabError):
    """The current budget does not yet witness a positive lower bound."""


class DeadEnd(UailabError):
    """A one-step percept map with zero total mass cannot be normalized."""


class ZeroEvidence(UailabError):
    """The mixture assigns zero mass to the conditioning history."""


class UndefinedHorizon(UailabError):
    """Effective horizon requested where the discount tail sum is zero."""


class SchemaError(UailabError):
    """Invalid configuration or environment-class file.

    ``path`` is the dotted location of the offending key.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
