"""Shared exception types.

Exit-code mapping used by the CLI: ConfigError -> 2, InfeasibleError -> 3,
InvariantViolation -> 4.
"""


class ConfigError(ValueError):
    """Bad configuration: unparseable file, out-of-range parameter."""


class TopologyError(ValueError):
    """Structurally invalid graph or graph query (e.g. disconnected)."""


class InfeasibleError(ValueError):
    """Problem instance admits no feasible solution."""


class SolverSizeError(InfeasibleError):
    """Instance too large for the exact solver; use the approximate one."""


class InvariantViolation(AssertionError):
    """A runtime invariant was broken; aborts the run loudly."""


class MockCryptoError(ValueError):
    """Mock decryption/verification failure (wrong key, tampered data)."""


class PathBrokenError(RuntimeError):
    """A probed path references a channel that no longer exists."""
