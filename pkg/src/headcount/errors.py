"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 1, ``DataError``
(and subclasses) exit 2, I/O problems exit 3.
"""


class HeadcountError(Exception):
    """Base class for all toolkit errors."""


class DataError(HeadcountError):
    """Invalid input data: schema violations, bad geometry, bad parameters."""


class FormatError(DataError):
    """A serialized artifact (C3DM file, manifest, config) is malformed."""


class StoreError(HeadcountError):
    """Experiment store cannot be opened or written."""


class StoreLockedError(StoreError):
    """Another writer holds the store lock."""
