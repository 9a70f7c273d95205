"""Exception types shared across the package."""


class BridgeTwinError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(BridgeTwinError):
    """Invalid configuration value, unknown key, or unresolvable parameter path."""


class ParseError(BridgeTwinError):
    """Malformed input file. Carries the source name and 1-based line number."""

    def __init__(self, message: str, source: str = "<input>", line: int | None = None):
        self.source = source
        self.line = line
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {message}")


class SolverError(BridgeTwinError):
    """Numerical-scheme contract violation (CFL breach, bound escape, bad geometry)."""


class ReplicateError(BridgeTwinError):
    """A Monte Carlo replicate failed; carries the replicate index and seed."""

    def __init__(self, index: int, seed: int, cause: Exception):
        self.index = index
        self.seed = seed
        self.cause = cause
        super().__init__(f"replicate {index} (seed {seed}) failed: {cause}")
