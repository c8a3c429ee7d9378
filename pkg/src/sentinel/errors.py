"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can print
``error[<code>]: <message>`` on a single line.
"""


class SentinelError(Exception):
    code = "error"


class DataError(SentinelError):
    code = "data"


class MalformedLine(DataError):
    code = "malformed-line"

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class NonMonotoneTimestamp(DataError):
    code = "non-monotone-timestamp"

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class EmptyInput(DataError):
    code = "empty-input"


class InvalidSpan(DataError):
    code = "invalid-span"


class SpanOutOfRange(DataError):
    code = "span-out-of-range"


class InsufficientData(DataError):
    code = "insufficient-data"


class DimensionMismatch(DataError):
    code = "dimension-mismatch"


class DegenerateLabels(DataError):
    code = "degenerate-labels"


class ModelMismatch(DataError):
    """Model/manifest disagree with the data (vocabulary hash, interval)."""

    code = "model-mismatch"


class BadRank(SentinelError):
    code = "bad-rank"


class EigenFailure(SentinelError):
    code = "eigen-failure"


class TrainingError(SentinelError):
    code = "training"


class NonConvergence(TrainingError):
    code = "non-convergence"


class TrainingDiverged(TrainingError):
    code = "training-diverged"
