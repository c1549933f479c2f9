"""Payment-channel-network toolkit.

Subpackages and modules:

- ``topology``   -- PCN graphs, generators, and path selection
- ``allocation`` -- hub placement: exact branch-and-bound and randomized
  double greedy on the complementary set function
- ``routing``    -- price-based rate control, demand splitting, queues and
  congestion windows
- ``protocol``   -- mock attested-execution payment protocol with an
  append-only ledger and adversarial message transport
- ``simulator``  -- deterministic discrete-event engine and the metric /
  scenario layer on top of it
- ``cli``        -- the ``pcnkit`` command-line front end
"""

__version__ = "0.1.0"

from pcnkit.errors import (
    ConfigError,
    InfeasibleError,
    InvariantViolation,
    TopologyError,
)

__all__ = [
    "ConfigError",
    "InfeasibleError",
    "InvariantViolation",
    "TopologyError",
    "__version__",
]
