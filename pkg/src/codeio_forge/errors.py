"""Exception types shared across the pipeline."""


class ForgeError(Exception):
    """Base class for all pipeline errors."""


class InvalidRatio(ForgeError):
    """A sampling fraction/ratio fell outside (0, 1]."""


class EmptyInput(ForgeError):
    """An aggregate operation received an empty input set."""


class VariantMismatch(ForgeError):
    """A prompt rendering request is inconsistent with the data-format variant."""


class VariantUnsupported(ForgeError):
    """The dataset assembler does not know the requested variant."""


class MissingResponse(ForgeError):
    """Benchmark scoring is missing a response for a (problem, language, case)."""


class EvaluatorUnavailable(ForgeError):
    """The success-rate filter was invoked without a configured scorer."""


class EmptyBenchmark(ForgeError):
    """A leakage report was requested for a benchmark with no questions."""
