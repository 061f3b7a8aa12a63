"""Exception types shared across the package."""


class AfcError(Exception):
    """Base class for all package errors."""


class ConfigError(AfcError):
    """Invalid configuration value or combination (CLI exit code 2)."""


class ContractViolation(AfcError):
    """A caller broke a documented precondition (e.g. dimension mismatch)."""


class SimulationDiverged(AfcError):
    """The surrogate state became non-finite during integration."""


class FormatError(AfcError):
    """A serialized file failed to parse; carries the byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class TemplateError(AfcError):
    """A template placeholder could not be resolved; carries the names."""

    def __init__(self, missing: list[str]):
        super().__init__(f"unresolved placeholders: {', '.join(sorted(missing))}")
        self.missing = sorted(missing)


class SolverError(AfcError):
    """An external solver process failed; carries its output tail."""

    def __init__(self, message: str, output_tail: str = ""):
        if output_tail:
            message = f"{message}\n--- output tail ---\n{output_tail}"
        super().__init__(message)
        self.output_tail = output_tail


class SolverTimeout(SolverError):
    """An external solver process exceeded its time budget."""


class SpawnError(SolverError):
    """An external solver process could not be started."""


class NonFiniteGradient(AfcError):
    """A policy update produced NaN/Inf gradients; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TrainingAborted(AfcError):
    """A training run halted mid-episode; carries the partial history."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = history if history is not None else []
