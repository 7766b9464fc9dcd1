class BoRankError(Exception):
    """Base class for every error raised by boRank."""

    def __init__(self, message="An unexpected error occurred."):
        self.message = message
        super().__init__(self.message)


class CorpusFormatError(BoRankError):
    """A JSONL corpus or queries file could not be parsed."""

    def __init__(self, path, line=None, reason="malformed record"):
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else f"{path}"
        super().__init__(f"{where}: {reason}")


class DuplicateIdError(BoRankError):
    """The same identifier appears twice where ids must be unique."""

    def __init__(self, doc_id, first_line, second_line, path=""):
        self.doc_id = doc_id
        self.lines = (first_line, second_line)
        super().__init__(f"{path}: duplicate id '{doc_id}' on lines {first_line} and {second_line}")


class EmbeddingFormatError(BoRankError):
    """An embedding binary or its manifest is invalid."""

    def __init__(self, message="Embedding file is not a valid EMB1 file"):
        super().__init__(message)


class QrelsFormatError(BoRankError):
    """A qrels row could not be ingested."""

    def __init__(self, path, line, reason="malformed qrels row"):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


class RunFormatError(BoRankError):
    """A TREC run file could not be ingested."""

    def __init__(self, path, line, reason="malformed run row"):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


class DimensionMismatchError(BoRankError, ValueError):
    """Two vectors (or a vector and a store) disagree on dimension."""

    def __init__(self, expected, got, what="vector"):
        self.expected = expected
        self.got = got
        super().__init__(f"{what} has dimension {got}, expected {expected}")


class InvalidParameterError(BoRankError, ValueError):
    """A parameter is outside its allowed range."""

    def __init__(self, message="Requested parameter value is outside of its allowed range"):
        super().__init__(message)


class CholeskyBreakdownError(BoRankError):
    """The kernel matrix could not be factorised, even after raising the jitter."""

    def __init__(self, message="Cholesky factorisation failed: kernel matrix is ill-conditioned. \n"
                               "Raise the jitter or the noise variance."):
        super().__init__(message)


class EmptyCandidateSetError(BoRankError):
    """Every document is excluded from acquisition."""

    def __init__(self, message="No eligible documents left to acquire"):
        super().__init__(message)


class OracleTransportError(BoRankError):
    """The relevance oracle endpoint could not be reached."""

    def __init__(self, message="The relevance oracle endpoint could not be reached after retrying"):
        super().__init__(message)


class OracleResponseError(BoRankError):
    """The relevance oracle answered with something that could not be parsed."""

    def __init__(self, message="The relevance oracle returned an unparseable response"):
        super().__init__(message)


class UnknownQueryError(BoRankError, KeyError):
    """A query id does not resolve against the loaded queries."""

    def __init__(self, query_id, where=""):
        self.query_id = query_id
        super().__init__(f"Unknown query id '{query_id}'" + (f" in {where}" if where else ""))

    def __str__(self):
        return self.message


class ReformulationError(BoRankError):
    """Reformulations could not be loaded or generated."""

    def __init__(self, message="Invalid query reformulation"):
        super().__init__(message)


class ConfigError(BoRankError):
    """The experiment configuration is invalid."""

    def __init__(self, message="Invalid experiment configuration"):
        super().__init__(message)


class NoRelevantDocumentsError(BoRankError):
    """A query has no document with grade > 0, so recall/NDCG are undefined."""

    def __init__(self, query_id):
        self.query_id = query_id
        super().__init__(f"Query '{query_id}' has no relevant documents")


class NotNormalizedWarning(Warning):
    def __init__(self, message="Embeddings are not unit-normalised; cosine and dot product will differ"):
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return repr(self.message)


class DuplicateQrelsWarning(Warning):
    def __init__(self, message="Duplicate qrels rows were overwritten"):
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return repr(self.message)


class GradeClampedWarning(Warning):
    def __init__(self, message="Relevance grade outside [0, s_max] was clamped"):
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return repr(self.message)


class CacheCorruptWarning(Warning):
    def __init__(self, message="Score cache is corrupt and was rebuilt empty"):
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return repr(self.message)


class IllConditionedWarning(Warning):
    def __init__(self, message="Cholesky factorisation failed; retrying with 10x jitter"):
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return repr(self.message)


class ReformulationWarning(Warning):
    def __init__(self, message="Query reformulations were adjusted"):
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return repr(self.message)
