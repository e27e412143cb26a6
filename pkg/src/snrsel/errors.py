"""Exception hierarchy shared across the library.

The CLI maps these onto process exit codes: configuration problems exit
with 1, data problems with 2, I/O problems with 3.
"""


class SnrselError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigurationError(SnrselError):
    """Invalid configuration, spec, or argument (exit code 1)."""

    exit_code = 1


class DataError(SnrselError):
    """Invalid or corrupted data (exit code 2)."""

    exit_code = 2


class ChecksumMismatchError(DataError):
    """Dataset container payload does not match the sidecar checksum."""


class TruncatedContainerError(DataError):
    """Dataset container holds fewer bytes than the sidecar declares."""


class SidecarInconsistentError(DataError):
    """Sidecar metadata is internally inconsistent with the payload."""


class OutputError(SnrselError):
    """Failure writing results or reports (exit code 3)."""

    exit_code = 3
