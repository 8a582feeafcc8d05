"""Exception hierarchy shared by the numerics and the command layer."""


class NovelcatError(Exception):
    """Base class for every error raised by the package."""


class ConfigValidationError(NovelcatError):
    """One or more configuration values are invalid.

    ``problems`` maps a field name to its message so the command layer can list
    every offending flag at once.
    """

    def __init__(self, problems):
        self.problems = dict(problems)
        lines = [f"{name}: {message}" for name, message in self.problems.items()]
        super().__init__("Invalid configuration:\n  " + "\n  ".join(lines))


class SeparationInfeasibleError(NovelcatError):
    def __init__(self, failing_pairs, num_classes, separation):
        self.failing_pairs = failing_pairs
        super().__init__(
            f"Could not place {num_classes} class means with cosine distance >= {separation}: "
            f"{failing_pairs} pair(s) still too close after bounded rejection sampling"
        )


class SplitError(NovelcatError):
    pass


class EmbeddingFormatError(NovelcatError):
    """Malformed embedding file."""


class TruncatedPayloadError(EmbeddingFormatError):
    pass


class SizeMismatchError(EmbeddingFormatError):
    pass


class NonFiniteValueError(EmbeddingFormatError):
    pass


class NonNormalizableRowError(EmbeddingFormatError):
    pass


class GraphError(NovelcatError):
    pass


class MemoryBankError(NovelcatError):
    pass


class LossError(NovelcatError):
    pass


class TrainingDivergedError(NovelcatError):
    def __init__(self, stage, epoch, batch_id, max_abs_grad):
        self.stage = stage
        self.epoch = epoch
        self.batch_id = batch_id
        self.max_abs_grad = max_abs_grad
        super().__init__(
            f"Non-finite loss in {stage} (epoch {epoch}, batch {batch_id}); max |grad| = {max_abs_grad:.4g}"
        )


class EvaluationError(NovelcatError):
    pass
