"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class ThzBeamError(Exception):
    """Base class for all package errors."""


class ConfigError(ThzBeamError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DomainError(ThzBeamError, ValueError):
    """An argument lies outside the operation's domain."""


class DelayWindowError(DomainError):
    """A path delay falls outside the cyclic-prefix window."""


class ShapeError(ThzBeamError, ValueError):
    """Array shapes do not agree."""


class DimensionMismatchError(ThzBeamError):
    """Stored artifact dimensions disagree with what the caller expects (exit code 4)."""

    def __init__(self, expected, found, what="header"):
        self.expected = dict(expected)
        self.found = dict(found)
        diff = [
            f"{k}: expected {self.expected.get(k)!r}, found {self.found.get(k)!r}"
            for k in sorted(set(self.expected) | set(self.found))
            if self.expected.get(k) != self.found.get(k)
        ]
        self.diff = diff
        super().__init__(f"{what} mismatch: " + ", ".join(diff))
