class FLMAError(Exception):
    """Base class for errors raised by this package."""


class DataFormatError(FLMAError, ValueError):
    """A data file violates its format; carries the offending line when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class LabelMismatchError(FLMAError, ValueError):
    """Label names of two artifacts (scores, rules, datasets) disagree."""
