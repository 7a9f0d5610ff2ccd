"""Exception types shared across the package.

All domain errors derive from CoordynError so callers can catch the
package's failures with one handler while still discriminating on the
specific condition.
"""


class CoordynError(Exception):
    """Base class for all errors raised by this package."""


class ConstraintViolated(CoordynError):
    """A payoff matrix breaks the opponent-coordination inequality."""


class InvalidAgent(CoordynError):
    """Agent id outside 0..n-1 for the given instance."""


class WrongRule(CoordynError):
    """Operation applied to an agent with the other update rule."""


class IsolatedAgent(CoordynError):
    """Imitation requested for an agent with no neighbors."""


class InvalidGraph(CoordynError):
    """Graph violates structural invariants (self-loop, multi-edge, disconnected)."""


class TooSmall(CoordynError):
    """Graph constructor parameter below the family's minimum size."""


class NotBranching(CoordynError):
    """Starlike constructor given fewer than three branches."""


class NotATree(CoordynError):
    """Tree-only operation applied to a graph with a cycle."""


class NotBranchingAgent(CoordynError):
    """Branch extraction anchored at a node of degree < 3."""


class PathTooShort(CoordynError):
    """Interior section count needs a path of at least three agents."""


class ScriptExhausted(CoordynError):
    """Scripted schedule asked for an activation past the end of its script."""


class TooLarge(CoordynError):
    """Instance exceeds the verifier's state-space cap."""


class ConfigError(CoordynError):
    """Configuration file failed to parse or validate.

    Carries the offending field path so the CLI can print a precise
    diagnostic.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
