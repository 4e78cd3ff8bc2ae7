"""Error types shared across modules, mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Invalid configuration (bad parameter combination, unknown key, ...)."""


class DomainError(ValueError):
    """Point or parameter outside the admissible domain."""


class ToleranceError(RuntimeError):
    """A check ran to completion but missed its tolerance."""


class BlowupError(RuntimeError):
    """A trajectory left the trust region and was stopped."""
