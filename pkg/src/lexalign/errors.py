class LexalignError(Exception):
    """Base class for data errors raised by this package."""


class ParseError(LexalignError):
    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class LanguageMismatchError(LexalignError):
    pass


class KindMismatchError(LexalignError):
    pass
