"""Exception types raised across the package."""


class AttnFuseError(Exception):
    """Base class for all package errors."""


# -- parsing / ingestion


class ParseError(AttnFuseError):
    def __init__(self, line, message):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class SourceSyntaxError(ParseError):
    """Unparseable input."""


class UnsupportedConstruct(ParseError):
    """Legal C that falls outside the supported subset."""

    def __init__(self, line, construct):
        self.construct = construct
        super().__init__(line, f"unsupported construct: {construct}")


class EmptyInput(AttnFuseError):
    """No function definition found."""


class SchemaError(AttnFuseError):
    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class CycleError(SchemaError):
    pass


# -- path mining


class DegenerateAst(AttnFuseError):
    pass


class EmptyCorpus(AttnFuseError):
    pass


# -- model


class IndexOutOfVocab(AttnFuseError):
    pass


class AllMasked(AttnFuseError):
    """Attention was asked to normalise over zero real positions."""


class CheckpointError(AttnFuseError):
    pass


class VocabMismatch(AttnFuseError):
    pass


# -- training / metrics


class SingleClassDataset(AttnFuseError):
    pass


class NoPositiveLabels(AttnFuseError):
    pass


# -- explanation


class AlignmentError(AttnFuseError):
    pass


class ConfigError(AttnFuseError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
