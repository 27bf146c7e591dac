"""Exception hierarchy shared by the scenario, solver and harness modules."""


class UnifiedWFError(Exception):
    """Base class for all package errors."""


class ScenarioInfeasibleError(UnifiedWFError):
    """The channel set cannot support the requested precoders."""


class DegenerateScenarioError(UnifiedWFError):
    """No sub-channel survives the channel-quality mask."""


class NoFeasibleMuError(UnifiedWFError):
    """The power multiplier bisection could not bracket the budget."""
