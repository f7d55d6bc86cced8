"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class GsvdMusicError(Exception):
    exit_code = 1


class ConfigError(GsvdMusicError):
    """Invalid or inconsistent configuration; raised before any processing."""

    exit_code = 2

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NumericalError(GsvdMusicError):
    exit_code = 3


class SingularMatrixError(NumericalError):
    def __init__(self, message, bins=()):
        self.bins = tuple(int(b) for b in bins)
        super().__init__(message)


class AudioError(GsvdMusicError):
    exit_code = 4


class FileFormatError(GsvdMusicError):
    exit_code = 4
