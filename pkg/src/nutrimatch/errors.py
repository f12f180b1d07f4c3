"""Exception hierarchy shared across the package."""


class NutrimatchError(Exception):
    """Base class for all domain errors; the CLI maps these to exit code 1."""


class IngestError(NutrimatchError):
    """Malformed source export (missing columns, unreadable header)."""


class BuildError(NutrimatchError):
    """Food database construction produced no usable records."""


class QueryError(NutrimatchError):
    """Query title is unusable (e.g. empty after normalization)."""


class FormatError(NutrimatchError):
    """Binary store payload violates the declared format."""


class CorruptionError(FormatError):
    """Store payload ends or breaks mid-structure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DegenerateVectorError(NutrimatchError):
    """All-zero vector where a direction is required."""


class DimensionError(NutrimatchError):
    """Vector dimensions disagree."""


class ConsistencyError(NutrimatchError):
    """Cross-referenced ids do not line up between artifacts."""


class ParameterError(NutrimatchError):
    """Invalid parameter value (e.g. n = 0)."""


class AggregationError(NutrimatchError):
    """Aggregation requested over an empty neighbor set."""


class ProviderError(NutrimatchError):
    """Embedding provider failed; distinct from a NoMatch outcome."""


class MissingTextError(ProviderError):
    """Precomputed provider has no vector for one or more texts."""

    def __init__(self, missing: list[str]):
        preview = ", ".join(repr(m) for m in missing[:5])
        suffix = "..." if len(missing) > 5 else ""
        super().__init__(f"no precomputed embedding for {len(missing)} text(s): {preview}{suffix}")
        self.missing = missing


class DatasetError(NutrimatchError):
    """Labeled dataset is empty or malformed."""


class EvaluationError(NutrimatchError):
    """Evaluation could not produce a score (e.g. zero coverage)."""


class CorpusError(NutrimatchError):
    """Submission dump is unusable or fails corpus-level sanity checks."""
