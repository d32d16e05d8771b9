#!/usr/bin/env python3
"""
Shared exception base.

Every module raises subclasses of ReachbackError; the command-line front end
maps them to exit codes.
"""

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_PARSE = 2
EXIT_INTERNAL = 3


class ReachbackError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = EXIT_INTERNAL


class InternalError(ReachbackError):
    """A state that valid inputs should never produce."""
