"""Exception types raised across the package."""


class OnlineBvmError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(OnlineBvmError, ValueError):
    pass


class InvalidAlpha(OnlineBvmError, ValueError):
    pass


class ConfigError(OnlineBvmError, ValueError):
    pass


class MalformedCsv(OnlineBvmError, ValueError):
    pass


class SolverError(OnlineBvmError, RuntimeError):
    """A numerical routine could not produce a usable result."""

    def __init__(self, message, *, step=None, context=None):
        self.step = step
        self.context = dict(context or {})
        super().__init__(message)

    def annotate(self, **context):
        """Return a copy of this error carrying extra location context."""
        merged = {**self.context, **context}
        step = merged.pop("step", self.step)
        parts = [f"{k}={v}" for k, v in merged.items()]
        if step is not None:
            parts.insert(0, f"step={step}")
        base = self.args[0].split(" [")[0]
        msg = f"{base} [{', '.join(parts)}]" if parts else base
        return type(self)(msg, step=step, context=merged)


class NotPositiveDefinite(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class SeparationDetected(SolverError):
    pass
