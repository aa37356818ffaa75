"""Exception hierarchy shared by every stage of the toolkit."""


class AsrError(Exception):
    """Base class for data errors (mapped to exit code 2 by the CLI)."""


# corpus / audio
class NotFound(AsrError, FileNotFoundError):
    pass


class MalformedWav(AsrError):
    pass


class UnsupportedWav(AsrError):
    pass


class ParseError(AsrError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownWord(AsrError):
    def __init__(self, word, line=None):
        self.word = word
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unknown word {word!r}{where}")


class DuplicatePath(ParseError):
    pass


# frontend
class TooShort(AsrError):
    pass


class ConfigInvalid(AsrError):
    pass


class InsufficientData(AsrError):
    pass


class InvalidK(AsrError):
    pass


class DimensionMismatch(AsrError):
    pass


# acoustic
class SymbolOutOfRange(AsrError):
    pass


class EmptyObservation(AsrError):
    pass


class AlphabetMismatch(AsrError):
    pass


class EmptyList(AsrError):
    pass


class UnknownPhone(AsrError):
    def __init__(self, phone):
        self.phone = phone
        super().__init__(f"unknown phone {phone!r}")


# decoder
class NoSurvivingPath(AsrError):
    pass


class GraphInvalid(AsrError):
    pass
