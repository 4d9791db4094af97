"""Error taxonomy shared across the package.

Two failure classes matter at the process boundary: contract violations
(bad arguments, shape mismatches, malformed configs) exit with code 2,
I/O failures (missing/corrupt/unwritable files) exit with code 1.
"""


class FrescoError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ContractError(FrescoError):
    """A precondition or invariant was violated by the caller."""

    exit_code = 2


class FrescoIOError(FrescoError):
    """A file could not be read, parsed, or written."""

    exit_code = 1


def require(condition: bool, message: str) -> None:
    """Raise ContractError with ``message`` unless ``condition`` holds."""
    if not condition:
        raise ContractError(message)
