"""Error taxonomy shared by the library, CLI and service.

Exit-code mapping used by the CLI: 0 success, 1 usage, 2 data, 3 numeric.
"""

from __future__ import annotations


class UsageError(Exception):
    """Bad invocation: unknown flags, missing arguments, invalid combinations."""

    exit_code = 1


class DataError(Exception):
    """Malformed or inconsistent input data: files, manifests, shapes, poses."""

    exit_code = 2


class NumericError(Exception):
    """Numerical failure: divergence, non-finite losses, degenerate geometry."""

    exit_code = 3
