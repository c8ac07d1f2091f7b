"""Exception taxonomy shared across the package."""


class DiscogError(Exception):
    """Base class for all errors raised by this package."""


# -- corpus loading ----------------------------------------------------------


class MalformedRecord(DiscogError):
    def __init__(self, line_number, reason):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class MalformedLine(MalformedRecord):
    pass


class DuplicateDocId(DiscogError):
    def __init__(self, doc_id):
        super().__init__(f"duplicate doc_id {doc_id!r}")
        self.doc_id = doc_id


class DuplicateTopicId(DiscogError):
    def __init__(self, topic_id):
        super().__init__(f"duplicate topic_id {topic_id!r}")
        self.topic_id = topic_id


class DuplicateJudgment(DiscogError):
    def __init__(self, topic_id, doc_id):
        super().__init__(f"duplicate judgment for ({topic_id!r}, {doc_id!r})")
        self.topic_id = topic_id
        self.doc_id = doc_id


class UnknownRelevanceValue(DiscogError):
    pass


class EmptyCorpus(DiscogError):
    pass


class NoTopics(DiscogError):
    pass


class EmptyStatement(DiscogError):
    pass


class SingleClassInput(DiscogError):
    pass


# -- vectors and keywords ----------------------------------------------------


class DimensionMismatch(DiscogError):
    pass


class UnknownText(DiscogError):
    """A precomputed-vectors provider has no entry for the requested text."""


# -- graph -------------------------------------------------------------------


class UnknownNode(DiscogError):
    pass


class UnknownDocId(UnknownNode):
    pass


class UnknownTopicId(UnknownNode):
    pass


class CorruptFile(DiscogError):
    pass


class VersionMismatch(DiscogError):
    pass


# -- training ----------------------------------------------------------------


class ConfigError(DiscogError):
    pass


class NoPositives(DiscogError):
    pass


class NonFiniteLoss(DiscogError):
    def __init__(self, epoch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class SingleClassTrainingSet(DiscogError):
    pass


class ShapeMismatch(DiscogError):
    pass


# -- ranking and evaluation --------------------------------------------------


class EmptyInput(DiscogError):
    pass


class SingleClassValidation(DiscogError):
    pass


class LengthMismatch(DiscogError):
    pass


class EmptyGold(DiscogError):
    pass


class CutoffExceedsCorpus(DiscogError):
    pass


# -- reasoning ---------------------------------------------------------------


class MissingPlaceholder(DiscogError):
    def __init__(self, placeholders):
        names = ", ".join(sorted(placeholders))
        super().__init__(f"template is missing or repeats placeholders: {names}")
        self.placeholders = placeholders


class ClientUnavailable(DiscogError):
    pass
