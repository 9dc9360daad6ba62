"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """An architecture or run configuration violates a structural constraint."""


class IngestionError(ValueError):
    """A training/inference sample does not match the detector's expected input."""


class EnhancementError(RuntimeError):
    """An enhancement strategy failed; carries the underlying diagnostics."""


class InstanceTooLargeError(ValueError):
    """The brute-force evaluator refuses instances above its size bound."""


class ReportJoinError(ValueError):
    """Accuracy and latency reports could not be joined on architecture keys."""

    def __init__(self, missing_latency, missing_accuracy):
        self.missing_latency = sorted(missing_latency)
        self.missing_accuracy = sorted(missing_accuracy)
        super().__init__(
            "report keys do not match: "
            f"no latency for {self.missing_latency}, no accuracy for {self.missing_accuracy}"
        )


class CheckpointError(ValueError):
    """A checkpoint file is malformed or inconsistent with its declared config."""
