"""Exception hierarchy shared across the package.

DataError covers malformed inputs (files, configs, empty geometry);
NumericError covers failures of the numerics themselves (non-finite
losses, degenerate field outputs). The CLI maps these to distinct
exit codes.
"""


class DataError(Exception):
    pass


class SoupParseError(DataError):
    """Malformed mesh file; carries the file path and 1-based line or byte offset."""

    def __init__(self, message, path=None, line=None, offset=None):
        loc = str(path) if path is not None else "<input>"
        if line is not None:
            loc += f":{line}"
        elif offset is not None:
            loc += f" @byte {offset}"
        super().__init__(f"{loc}: {message}")
        self.path = path
        self.line = line
        self.offset = offset


class NumericError(Exception):
    pass


class DegenerateNormal(NumericError):
    """Normal-field output too close to zero to normalize."""

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = indices
